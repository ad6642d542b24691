use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kron reduction failed: eliminated block over buses {buses:?} is singular")]
    ReductionFailure { buses: Vec<usize> },

    #[error("no equilibrium found after {iterations} Newton iterations (residual {residual:.3e})")]
    Infeasible { iterations: usize, residual: f64 },

    #[error("trajectory diverged at t = {time:.4} s (|delta deviation| > pi)")]
    Instability { time: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("storage invariant violated: {0}")]
    InvariantViolation(String),

    #[error("covariance is ill-conditioned (condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error(
        "matrix logarithm branch is ambiguous: eigenvalue {re:.4e}{im:+.4e}i is on or near the \
         negative real axis (lag too long for the fastest mode?)"
    )]
    BranchAmbiguity { re: f64, im: f64 },

    #[error("state matrix is not Hurwitz (max real part {max_real:.4e}); no stationary covariance")]
    NotHurwitz { max_real: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("campaign failed: {excluded} of {total} runs excluded")]
    CampaignFailed { excluded: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code for the command-line front end, one per failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) => 2,
            Error::Io(_) => 3,
            Error::ReductionFailure { .. } | Error::Infeasible { .. } => 4,
            Error::CampaignFailed { .. } => 5,
            Error::Instability { .. } => 6,
            Error::InsufficientData(_)
            | Error::Conditioning { .. }
            | Error::BranchAmbiguity { .. }
            | Error::NotHurwitz { .. }
            | Error::Numerical(_) => 7,
            Error::Domain(_) | Error::InvariantViolation(_) => 8,
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
