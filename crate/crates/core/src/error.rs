use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least 2 replicates to estimate moments, got {0}")]
    TooFewReplicates(usize),
    #[error("variance of the target statistic is not positive definite")]
    SingularVariance,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("nothing selected: {0}")]
    NothingSelected(&'static str),
    #[error("selector output does not match the supplied data: {0}")]
    Mismatch(String),
    #[error("conditional law is degenerate: selection probability vanishes on the grid")]
    DegenerateLaw,
    #[error("truncation point lies beyond the numerical support")]
    TruncationBeyondSupport,
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("no bootstrap replicate reproduced the observed model in {attempts} attempts")]
    NoAcceptedPivots { attempts: usize },
    #[error("could not parse {what}: {detail}")]
    Parse { what: &'static str, detail: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
