use thiserror::Error;

/// Errors raised by the solver kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DreError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("term {index} has {found} rows, expected {expected}")]
    TermDimension {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("cannot assemble an empty list of terms")]
    EmptyAssembly,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("krylov exponential action did not converge (residual estimate {residual:.3e} at t = {t:.3e})")]
    KrylovNonConvergence { residual: f64, t: f64 },

    #[error("numerical kernel failure: {0}")]
    Numerical(String),

    #[error("step size cannot shrink further at t = {t:.6e}: retry {h:.3e}, h_min = {h_min:.3e}")]
    StepSizeUnderflow { t: f64, h: f64, h_min: f64 },

    #[error("{rejects} consecutive rejections at t = {t:.6e}")]
    TooManyRejections { t: f64, rejects: usize },

    #[error("nonpositive mass-matrix entry {value} at index {index}")]
    NonPositiveMass { index: usize, value: f64 },

    #[error("oracle size cap exceeded: N = {n} > {cap}")]
    OracleCapExceeded { n: usize, cap: usize },

    #[error("{0}")]
    OracleFailure(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, DreError>;
