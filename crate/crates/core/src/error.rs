use thiserror::Error;

use crate::netcore::Entry;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entry ({0}, {1}) out of range for {2} banks")]
    IndexOutOfRange(usize, usize, usize),

    #[error("entry ({0}, {0}) is on the diagonal")]
    DiagonalEntry(usize),

    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),

    #[error("inconsistent observation: {side} residual of bank {bank} is {residual}")]
    InconsistentObservation {
        bank: usize,
        side: &'static str,
        residual: f64,
    },

    #[error("sparsity denominator is zero")]
    ZeroDenominator,

    #[error("prior value must be positive, got {0}")]
    NonPositivePrior(f64),

    #[error("constraint set is infeasible: max flow {flow} < required {required}")]
    Infeasible { flow: f64, required: f64 },

    #[error("support is incompatible with the constraints: max flow {flow} < required {required}")]
    InfeasibleSupport { flow: f64, required: f64 },

    #[error("no convergence after {iterations} iterations (max violation {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("locally infeasible factors: {0:?}")]
    LocallyInfeasible(Vec<String>),

    #[error("decimation exhausted {restarts} restarts")]
    ExhaustedRestarts { restarts: usize },

    #[error("support length {got} does not match {expected} unknown entries")]
    SupportMismatch { expected: usize, got: usize },

    #[error("unknown entry {0:?} is not part of the problem")]
    UnknownEntry(Entry),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange(..) => "index_out_of_range",
            Error::DiagonalEntry(_) => "diagonal_entry",
            Error::InvalidThreshold(_) => "invalid_threshold",
            Error::InconsistentObservation { .. } => "inconsistent_observation",
            Error::ZeroDenominator => "zero_denominator",
            Error::NonPositivePrior(_) => "non_positive_prior",
            Error::Infeasible { .. } => "infeasible",
            Error::InfeasibleSupport { .. } => "infeasible_support",
            Error::NotConverged { .. } => "not_converged",
            Error::LocallyInfeasible(_) => "locally_infeasible",
            Error::ExhaustedRestarts { .. } => "exhausted_restarts",
            Error::SupportMismatch { .. } => "support_mismatch",
            Error::UnknownEntry(_) => "unknown_entry",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse(_) => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
