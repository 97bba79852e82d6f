//! Command-line flags, the key-value config file, and their merge into
//! validated run specifications.
//!
//! The config file is TOML with the long flag names as keys (`t-end` or
//! `t_end`). List-valued keys (`steps`, `tol`, `k`, `h`) take an array or a
//! single value. Flags given on the command line win over the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use dre_core::{ControllerConfig, Scheme};

use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Key-value config file (TOML); flags override its entries.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Problem source: `adv-diff` (builtin generator) or `files`.
    #[arg(long)]
    pub problem: Option<String>,

    /// Interior grid points per direction for `adv-diff` (N = n0^2).
    #[arg(long)]
    pub n0: Option<usize>,

    /// Seed for random factors.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Initial value: `given` (the problem's X0) or `steady` (dense steady state, N <= 64).
    #[arg(long)]
    pub start: Option<String>,

    /// Diagonal of E (CSV), for `--problem files`.
    #[arg(long)]
    #[serde(alias = "e_diag")]
    pub e_diag: Option<PathBuf>,

    /// A (Matrix Market), for `--problem files`.
    #[arg(long)]
    #[serde(alias = "a_matrix")]
    pub a_matrix: Option<PathBuf>,

    /// B (CSV, N x q), for `--problem files`.
    #[arg(long)]
    #[serde(alias = "b_matrix")]
    pub b_matrix: Option<PathBuf>,

    /// C (CSV, p x N), for `--problem files`.
    #[arg(long)]
    #[serde(alias = "c_matrix")]
    pub c_matrix: Option<PathBuf>,

    /// exprb2, exprb3, exprb32 or exprb43.
    #[arg(long)]
    pub method: Option<String>,

    /// Sets both Atol and Rtol; a comma-separated list for `tolstudy`.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub tol: Option<Vec<f64>>,

    #[arg(long)]
    pub atol: Option<f64>,

    #[arg(long)]
    pub rtol: Option<f64>,

    /// Fixed number of steps; a comma-separated list for `convergence`.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub steps: Option<Vec<usize>>,

    /// Final time.
    #[arg(long)]
    #[serde(alias = "t_end")]
    pub t_end: Option<f64>,

    /// Smallest admissible step (default 1e-12 * t_end).
    #[arg(long)]
    #[serde(alias = "h_min")]
    pub h_min: Option<f64>,

    /// Largest admissible step (default t_end).
    #[arg(long)]
    #[serde(alias = "h_max")]
    pub h_max: Option<f64>,

    /// Rejections tolerated at one time point.
    #[arg(long)]
    #[serde(alias = "max_rejects")]
    pub max_rejects: Option<usize>,

    /// Output CSV path (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// `phitest`: operator dimension N.
    #[arg(long)]
    pub n: Option<usize>,

    /// `phitest`: φ indices.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub k: Option<Vec<usize>>,

    /// `phitest`: step sizes.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, deserialize_with = "one_or_many")]
    pub h: Option<Vec<f64>>,

    /// `phitest`: random instances.
    #[arg(long)]
    pub trials: Option<usize>,
}

fn one_or_many<'de, D, T>(de: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Some(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    }))
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),*) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl Settings {
    /// Parses a config file body.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fills every unset field from `file`.
    pub fn overlay(mut self, file: Settings) -> Self {
        overlay!(self, file; problem, n0, seed, start, e_diag, a_matrix, b_matrix, c_matrix,
            method, tol, atol, rtol, steps, t_end, h_min, h_max, max_rejects, out, n, k, h, trials);
        self
    }

    /// Command-line settings merged with the config file they name, if any.
    pub fn resolve(self) -> Result<Self, CliError> {
        match self.config.clone() {
            Some(path) => Ok(self.overlay(Settings::from_file(&path)?)),
            None => Ok(self),
        }
    }

    pub fn method(&self) -> Result<Scheme, CliError> {
        let name = self.method.as_deref().unwrap_or("exprb32");
        name.parse::<Scheme>()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn t_end(&self) -> Result<f64, CliError> {
        let t = self.t_end.unwrap_or(0.1);
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::Usage(format!(
                "--t-end must be positive, got {t}"
            )));
        }
        Ok(t)
    }

    pub fn source(&self) -> Result<ProblemSource, CliError> {
        let files = [&self.e_diag, &self.a_matrix, &self.b_matrix, &self.c_matrix];
        match self.problem.as_deref().unwrap_or("adv-diff") {
            "adv-diff" => {
                if files.iter().any(|f| f.is_some()) {
                    return Err(CliError::Usage(
                        "matrix files given with --problem adv-diff; use --problem files".into(),
                    ));
                }
                Ok(ProblemSource::AdvectionDiffusion {
                    n0: self.n0.unwrap_or(8),
                    seed: self.seed.unwrap_or(DEFAULT_SEED),
                })
            }
            "files" => {
                let [e, a, b, c] = files.map(Clone::clone);
                match (e, a, b, c) {
                    (Some(e_diag), Some(a), Some(b), Some(c)) => {
                        Ok(ProblemSource::Files { e_diag, a, b, c })
                    }
                    _ => Err(CliError::Usage(
                        "--problem files needs --e-diag, --a-matrix, --b-matrix and --c-matrix"
                            .into(),
                    )),
                }
            }
            other => Err(CliError::Usage(format!(
                "unknown problem '{other}' (expected adv-diff or files)"
            ))),
        }
    }

    pub fn start(&self) -> Result<StartMode, CliError> {
        match self.start.as_deref().unwrap_or("given") {
            "given" => Ok(StartMode::Given),
            "steady" => Ok(StartMode::Steady),
            other => Err(CliError::Usage(format!(
                "unknown start '{other}' (expected given or steady)"
            ))),
        }
    }

    /// `(atol, rtol)` from `--tol` and the individual overrides.
    pub fn tolerances(&self, tol: Option<f64>) -> Result<(f64, f64), CliError> {
        let base = tol.unwrap_or(1e-5);
        let (atol, rtol) = (self.atol.unwrap_or(base), self.rtol.unwrap_or(base));
        if !(atol >= 0.0 && rtol >= 0.0 && atol + rtol > 0.0) {
            return Err(CliError::Usage(format!(
                "tolerances must be non-negative and not both zero (atol {atol}, rtol {rtol})"
            )));
        }
        Ok((atol, rtol))
    }

    pub fn controller(&self, atol: f64, rtol: f64) -> Result<ControllerConfig, CliError> {
        let mut ctrl = ControllerConfig::with_tolerances(atol, rtol);
        ctrl.h_min = self.h_min;
        ctrl.h_max = self.h_max;
        if let Some(m) = self.max_rejects {
            ctrl.max_rejects = m;
        }
        ctrl.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(ctrl)
    }

    fn single<T: Copy>(list: &Option<Vec<T>>, flag: &str) -> Result<Option<T>, CliError> {
        match list.as_deref() {
            None => Ok(None),
            Some([v]) => Ok(Some(*v)),
            Some(_) => Err(CliError::Usage(format!("{flag} takes a single value here"))),
        }
    }

    /// The specification for `solve`.
    pub fn run_spec(&self) -> Result<RunSpec, CliError> {
        let method = self.method()?;
        let steps = Self::single(&self.steps, "--steps")?;
        let tol = Self::single(&self.tol, "--tol")?;
        let mode = match steps {
            Some(0) => return Err(CliError::Usage("--steps must be positive".into())),
            Some(n) => {
                if tol.is_some() || self.atol.is_some() || self.rtol.is_some() {
                    return Err(CliError::Usage(
                        "give either --steps (fixed) or tolerances (adaptive), not both".into(),
                    ));
                }
                Mode::Fixed { n_steps: n }
            }
            None => {
                if method.embedded_order().is_none() {
                    return Err(CliError::Usage(format!(
                        "adaptive mode needs an embedded method (exprb32 or exprb43), got {method}; \
                         pass --steps for fixed-step runs"
                    )));
                }
                let (atol, rtol) = self.tolerances(tol)?;
                Mode::Adaptive(self.controller(atol, rtol)?)
            }
        };
        Ok(RunSpec {
            source: self.source()?,
            start: self.start()?,
            method,
            mode,
            t_end: self.t_end()?,
            out: self.out.clone(),
        })
    }
}

/// Seed of the builtin benchmark when `--seed` is absent.
pub const DEFAULT_SEED: u64 = 42;

/// Where the coefficients come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    AdvectionDiffusion {
        n0: usize,
        seed: u64,
    },
    Files {
        e_diag: PathBuf,
        a: PathBuf,
        b: PathBuf,
        c: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartMode {
    Given,
    /// Replace X0 by the dense steady state.
    Steady,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Fixed { n_steps: usize },
    Adaptive(ControllerConfig),
}

/// A fully validated single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub source: ProblemSource,
    pub start: StartMode,
    pub method: Scheme,
    pub mode: Mode,
    pub t_end: f64,
    pub out: Option<PathBuf>,
}
