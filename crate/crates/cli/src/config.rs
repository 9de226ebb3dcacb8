//! Experiment configuration: defaults, `key = value` files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flowlab_core::energy::Regularization;
use flowlab_core::ExactKind;
use serde::Serialize;

use crate::error::{ExperimentError, Result};

/// Half side length of the computational square.
pub const HALF_WIDTH: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    Disk,
    Cone,
}

impl Example {
    pub fn kind(self) -> ExactKind {
        match self {
            Example::Disk => ExactKind::Disk,
            Example::Cone => ExactKind::Cone,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Semi,
    ImplicitAdmm,
    ImplicitFp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
}

/// How the `L^2` error against the exact solution is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorNorm {
    /// `||u_h - I_h u(t)||_M` against the nodal interpolant of the exact solution.
    Interpolant,
    /// `||u_h - u(t)||` by sub-triangle quadrature against the exact solution.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// How the regularization parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum EpsMode {
    /// `eps = h^alpha`.
    Power(f64),
    Absolute(f64),
}

impl EpsMode {
    pub fn eps(self, h: f64) -> f64 {
        match self {
            EpsMode::Power(a) => h.powf(a),
            EpsMode::Absolute(e) => e,
        }
    }
}

impl fmt::Display for EpsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsMode::Power(a) => write!(f, "h^{a}"),
            EpsMode::Absolute(e) => write!(f, "{e}"),
        }
    }
}

macro_rules! keyword_enum {
    ($ty:ident, $what:literal, { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = ExperimentError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(ExperimentError::Config(format!(
                        concat!("unknown ", $what, " '{}' (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(Example, "example", { "disk" => Example::Disk, "cone" => Example::Cone });
keyword_enum!(Scheme, "scheme", {
    "semi" => Scheme::Semi,
    "implicit-admm" => Scheme::ImplicitAdmm,
    "implicit-fp" => Scheme::ImplicitFp,
});
keyword_enum!(Boundary, "boundary condition", { "dirichlet" => Boundary::Dirichlet, "neumann" => Boundary::Neumann });
keyword_enum!(ErrorNorm, "error norm", { "interpolant" => ErrorNorm::Interpolant, "quadrature" => ErrorNorm::Quadrature });
keyword_enum!(OutputFormat, "output format", { "csv" => OutputFormat::Csv, "json" => OutputFormat::Json });

fn parse_regularization(s: &str) -> Result<Regularization> {
    match s.trim().to_ascii_lowercase().as_str() {
        "standard" => Ok(Regularization::Standard),
        "truncated" => Ok(Regularization::Truncated),
        other => Err(ExperimentError::Config(format!(
            "unknown regularization '{other}' (expected one of: standard, truncated)"
        ))),
    }
}

fn regularization_name(r: Regularization) -> &'static str {
    match r {
        Regularization::Standard => "standard",
        Regularization::Truncated => "truncated",
    }
}

fn serialize_regularization<S: serde::Serializer>(r: &Regularization, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(regularization_name(*r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub example: Example,
    pub scheme: Scheme,
    pub level: usize,
    pub p: f64,
    #[serde(serialize_with = "serialize_regularization")]
    pub regularization: Regularization,
    /// `None` selects the scheme default: `h^1`, or `0` for ADMM.
    pub eps_mode: Option<EpsMode>,
    /// `tau = tau_factor * h`.
    pub tau_factor: f64,
    pub t_end: f64,
    pub bc: Boundary,
    pub error_norm: ErrorNorm,
    /// The error quadrature splits every element into `4^subdiv` pieces.
    pub subdiv: u32,
    pub cg_tol: f64,
    pub lumped_mass: bool,
    /// ADMM stopping bound; `None` means `h^5`.
    pub delta_stop: Option<f64>,
    pub rho0: f64,
    pub admm_max_iter: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    /// Replace the initial datum by zero.
    pub zero_datum: bool,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            example: Example::Disk,
            scheme: Scheme::Semi,
            level: 4,
            p: 1.0,
            regularization: Regularization::Standard,
            eps_mode: None,
            tau_factor: 0.25,
            t_end: 1.0,
            bc: Boundary::Dirichlet,
            error_norm: ErrorNorm::Interpolant,
            subdiv: 2,
            cg_tol: 1e-12,
            lumped_mass: false,
            delta_stop: None,
            rho0: 1.0,
            admm_max_iter: 20_000,
            inner_tol: 1e-10,
            max_inner: 10_000,
            zero_datum: false,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

/// Keys accepted in configuration files; flags use the same names with `-`.
pub const KEYS: &[&str] = &[
    "example",
    "scheme",
    "level",
    "p",
    "regularization",
    "eps_power",
    "eps",
    "tau_factor",
    "t_end",
    "bc",
    "error_norm",
    "subdiv",
    "cg_tol",
    "lumped_mass",
    "delta_stop",
    "rho0",
    "admm_max_iter",
    "inner_tol",
    "max_inner",
    "zero_datum",
    "output",
    "format",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| ExperimentError::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ExperimentError::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl ExperimentConfig {
    /// Sets one key; `-` and `_` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "example" => self.example = value.parse()?,
            "scheme" => self.scheme = value.parse()?,
            "level" => self.level = parse_num(&key, value)?,
            "p" => self.p = parse_num(&key, value)?,
            "regularization" => self.regularization = parse_regularization(value)?,
            "eps_power" => self.eps_mode = Some(EpsMode::Power(parse_num(&key, value)?)),
            "eps" => self.eps_mode = Some(EpsMode::Absolute(parse_num(&key, value)?)),
            "tau_factor" => self.tau_factor = parse_num(&key, value)?,
            "t_end" => self.t_end = parse_num(&key, value)?,
            "bc" => self.bc = value.parse()?,
            "error_norm" => self.error_norm = value.parse()?,
            "subdiv" => self.subdiv = parse_num(&key, value)?,
            "cg_tol" => self.cg_tol = parse_num(&key, value)?,
            "lumped_mass" => self.lumped_mass = parse_bool(&key, value)?,
            "delta_stop" => self.delta_stop = Some(parse_num(&key, value)?),
            "rho0" => self.rho0 = parse_num(&key, value)?,
            "admm_max_iter" => self.admm_max_iter = parse_num(&key, value)?,
            "inner_tol" => self.inner_tol = parse_num(&key, value)?,
            "max_inner" => self.max_inner = parse_num(&key, value)?,
            "zero_datum" => self.zero_datum = parse_bool(&key, value)?,
            "output" => self.output = Some(PathBuf::from(value.trim())),
            "format" => self.format = value.parse()?,
            _ => {
                return Err(ExperimentError::Config(format!(
                    "unknown key '{key}' (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` pairs in order.
    pub fn apply<'a, I: IntoIterator<Item = (&'a str, &'a str)>>(&mut self, pairs: I) -> Result<()> {
        pairs.into_iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Effective regularization mode.
    pub fn eps_mode(&self) -> EpsMode {
        self.eps_mode.unwrap_or(match self.scheme {
            Scheme::ImplicitAdmm => EpsMode::Absolute(0.0),
            Scheme::Semi | Scheme::ImplicitFp => EpsMode::Power(1.0),
        })
    }

    /// `h = 3 sqrt(2) / 2^level`.
    pub fn mesh_size(&self) -> f64 {
        2.0 * HALF_WIDTH * std::f64::consts::SQRT_2 / (1u64 << self.level) as f64
    }

    pub fn eps(&self) -> f64 {
        self.eps_mode().eps(self.mesh_size())
    }

    pub fn tau(&self) -> f64 {
        self.tau_factor * self.mesh_size()
    }

    pub fn delta_stop(&self) -> f64 {
        self.delta_stop.unwrap_or_else(|| self.mesh_size().powi(5))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.level > 12 {
            return bad(format!("level {} is too large (at most 12)", self.level));
        }
        if !(1.0..2.0).contains(&self.p) {
            return bad(format!("p must lie in [1, 2), got {}", self.p));
        }
        if !(self.tau_factor > 0.0 && self.tau_factor.is_finite()) {
            return bad(format!("tau_factor must be positive, got {}", self.tau_factor));
        }
        if !(self.t_end >= self.tau()) {
            return bad(format!("t_end = {} is shorter than one step tau = {}", self.t_end, self.tau()));
        }
        if self.subdiv > 6 {
            return bad(format!("subdiv {} is too large (at most 6)", self.subdiv));
        }
        if !(self.cg_tol > 0.0) {
            return bad("cg_tol must be positive".into());
        }
        let eps = self.eps();
        if !(eps >= 0.0 && eps.is_finite()) {
            return bad(format!("eps must be nonnegative, got {eps}"));
        }
        match self.scheme {
            Scheme::Semi | Scheme::ImplicitFp if eps <= 0.0 => {
                bad(format!("scheme {} requires eps > 0 (set eps-power or a positive eps)", self.scheme))
            }
            Scheme::ImplicitAdmm if self.p != 1.0 || eps != 0.0 => bad(format!(
                "scheme implicit-admm requires p = 1 and eps = 0 (got p = {}, eps mode {})",
                self.p,
                self.eps_mode()
            )),
            Scheme::ImplicitAdmm if !(self.delta_stop() > 0.0) => bad("delta_stop must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("line {}: expected 'key = value', got '{raw}'", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ExperimentError::Config(format!("line {}: empty key", n + 1)));
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Defaults, then the file (if any), then the flag pairs; validated.
pub fn parse_config(file: Option<&Path>, flags: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let pairs = parse_config_text(&text)?;
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    }
    cfg.apply(flags.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    cfg.validate()?;
    Ok(cfg)
}
