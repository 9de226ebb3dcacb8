//! Experiment harness for the flowlab schemes: configuration, runs against
//! exact solutions, convergence tables and CSV/JSON output.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod verify;

pub use config::{parse_config, Boundary, EpsMode, Example, ExperimentConfig, OutputFormat, Scheme};
pub use error::{ExperimentError, Result};
pub use experiment::{check_stability, convergence_study, run_experiment, ErrorSeries, TableRow};
