use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use flowlab::config::{parse_config, EpsMode, ExperimentConfig, OutputFormat};
use flowlab::experiment::{check_stability, convergence_study, run_experiment};
use flowlab::output::{write_atomically, write_run_csv, write_run_json, write_table_csv};
use flowlab::verify::verify_exact;

#[derive(Parser)]
#[command(name = "flowlab", version, about = "Semi-implicit and implicit schemes for p-Laplace and total variation flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit its error series.
    Run(#[command(flatten)] ExperimentArgs),
    /// Maximal errors over levels and eps modes.
    Table {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Inclusive level range `a..b`, or a single level.
        #[arg(long, default_value = "3..6")]
        levels: String,
        /// Comma-separated exponents alpha with eps = h^alpha.
        #[arg(long, value_delimiter = ',')]
        eps_powers: Vec<f64>,
    },
    /// Energy balance of the semi-implicit scheme for several step sizes.
    CheckStability {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Step sizes; defaults to the configured tau, 1 and 10.
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
        /// Each run covers at least this many steps.
        #[arg(long, default_value_t = 5)]
        min_steps: usize,
        /// Relative tolerance on the slack and on energy increases.
        #[arg(long, default_value_t = 1e-10)]
        rel_tol: f64,
    },
    /// Check the exact solutions against their flux fields.
    VerifyExact {
        #[arg(long, default_value_t = 1e-3)]
        grid: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

/// Experiment flags; each overrides the corresponding key of `--config`.
#[derive(Args, Default)]
struct ExperimentArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// disk | cone
    #[arg(long)]
    example: Option<String>,
    /// semi | implicit-admm | implicit-fp
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    p: Option<String>,
    /// standard | truncated
    #[arg(long)]
    regularization: Option<String>,
    /// eps = h^alpha
    #[arg(long)]
    eps_power: Option<String>,
    /// Absolute eps.
    #[arg(long)]
    eps: Option<String>,
    /// tau = factor * h
    #[arg(long)]
    tau_factor: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    /// dirichlet | neumann
    #[arg(long)]
    bc: Option<String>,
    /// interpolant | quadrature
    #[arg(long)]
    error_norm: Option<String>,
    /// Error quadrature refinement.
    #[arg(long)]
    subdiv: Option<String>,
    #[arg(long)]
    cg_tol: Option<String>,
    #[arg(long)]
    lumped_mass: Option<String>,
    /// ADMM stopping bound (default h^5).
    #[arg(long)]
    delta_stop: Option<String>,
    #[arg(long)]
    rho0: Option<String>,
    #[arg(long)]
    admm_max_iter: Option<String>,
    #[arg(long)]
    inner_tol: Option<String>,
    #[arg(long)]
    max_inner: Option<String>,
    /// Start from zero instead of the exact datum.
    #[arg(long)]
    zero_datum: Option<String>,
    /// Output file (stdout when absent).
    #[arg(long)]
    output: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

impl ExperimentArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let flags: Vec<(String, String)> = [
            ("example", &self.example),
            ("scheme", &self.scheme),
            ("level", &self.level),
            ("p", &self.p),
            ("regularization", &self.regularization),
            ("eps_power", &self.eps_power),
            ("eps", &self.eps),
            ("tau_factor", &self.tau_factor),
            ("t_end", &self.t_end),
            ("bc", &self.bc),
            ("error_norm", &self.error_norm),
            ("subdiv", &self.subdiv),
            ("cg_tol", &self.cg_tol),
            ("lumped_mass", &self.lumped_mass),
            ("delta_stop", &self.delta_stop),
            ("rho0", &self.rho0),
            ("admm_max_iter", &self.admm_max_iter),
            ("inner_tol", &self.inner_tol),
            ("max_inner", &self.max_inner),
            ("zero_datum", &self.zero_datum),
            ("output", &self.output),
            ("format", &self.format),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
        if self.eps.is_some() && self.eps_power.is_some() {
            bail!("--eps and --eps-power are mutually exclusive");
        }
        Ok(parse_config(self.config.as_deref(), &flags)?)
    }
}

fn parse_levels(s: &str) -> anyhow::Result<Vec<usize>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().with_context(|| format!("bad level range '{s}'"))?;
        let b: usize = b.trim().trim_start_matches('=').parse().with_context(|| format!("bad level range '{s}'"))?;
        if a > b {
            bail!("empty level range '{s}'");
        }
        Ok((a..=b).collect())
    } else {
        Ok(vec![s.parse().with_context(|| format!("bad level '{s}'"))?])
    }
}

fn emit(cfg: &ExperimentConfig, fill: impl FnOnce(&mut Vec<u8>) -> flowlab::Result<()>) -> anyhow::Result<()> {
    match &cfg.output {
        Some(path) => write_atomically(path, fill).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut buf = Vec::new();
            fill(&mut buf)?;
            std::io::stdout().write_all(&buf)?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(exp) => {
            let cfg = exp.resolve()?;
            let series = run_experiment(&cfg)?;
            log::info!("max L2 error {}", series.max_error);
            emit(&cfg, |buf| match cfg.format {
                OutputFormat::Csv => write_run_csv(&series, buf),
                OutputFormat::Json => write_run_json(&series, buf),
            })?;
            Ok(true)
        }
        Command::Table { exp, levels, eps_powers } => {
            let cfg = exp.resolve()?;
            let levels = parse_levels(&levels)?;
            let modes: Vec<EpsMode> = if eps_powers.is_empty() {
                vec![cfg.eps_mode()]
            } else {
                eps_powers.into_iter().map(EpsMode::Power).collect()
            };
            let rows = convergence_study(&cfg, &levels, &modes)?;
            emit(&cfg, |buf| match cfg.format {
                OutputFormat::Csv => write_table_csv(&rows, buf),
                OutputFormat::Json => Ok(serde_json::to_writer_pretty(buf, &rows)?),
            })?;
            Ok(rows.iter().all(|r| r.status == "ok"))
        }
        Command::CheckStability { exp, taus, min_steps, rel_tol } => {
            let cfg = exp.resolve()?;
            let taus = if taus.is_empty() { vec![cfg.tau(), 1.0, 10.0] } else { taus };
            let checks = check_stability(&cfg, &taus, min_steps, rel_tol)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "tau,n_steps,min_slack,min_relative_slack,energies_nonincreasing,stable")?;
            for c in &checks {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.tau, c.n_steps, c.min_slack, c.min_relative_slack, c.energies_nonincreasing, c.stable
                )?;
            }
            Ok(checks.iter().all(|c| c.stable))
        }
        Command::VerifyExact { grid, tol } => {
            let checks = verify_exact(grid, tol);
            let mut out = std::io::stdout().lock();
            writeln!(out, "region,t,samples,max_discrepancy,max_flux_norm,passed")?;
            for c in &checks {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.name, c.t, c.samples, c.max_discrepancy, c.max_flux_norm, c.passed
                )?;
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
