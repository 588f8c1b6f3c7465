use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("eigenvalue index {index} out of range for a spectrum of dimension {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("unknown spectrum family `{name}`; valid families are: {}", crate::spectrum::FAMILY_IDS.join(", "))]
    UnknownFamily { name: String },

    #[error("effective-dimension scan for {spectrum} did not terminate within {cap} indices")]
    Pathological { spectrum: String, cap: usize },

    #[error("rank-deficient sample (seed {seed}, stream {stream}): mu_n / mu_1 = {ratio:e}")]
    RankDeficient { seed: u64, stream: u64, ratio: f64 },

    #[error("step size {learning_rate} violates stability: {reason}")]
    Stability { learning_rate: f64, reason: String },

    #[error("gradient descent diverged at epoch {epoch}: |theta| = {norm:e} exceeds {limit:e}; reduce the step size")]
    Divergence { epoch: u64, norm: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("instance too large for explicit matrices: p = {p} (limit {limit})")]
    TooLarge { p: usize, limit: usize },

    #[error("epoch grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("division guard: {0}")]
    DivisionGuard(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownFamily { .. }
            | Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::InvalidSpectrum(_)
            | Error::Unsupported(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            _ => 3,
        }
    }
}
