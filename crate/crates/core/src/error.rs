use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid interval: upper bound {upper} must exceed lower bound {lower}")]
    InvalidInterval { upper: f64, lower: f64 },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("variance {sigma2} is below the floor {floor}")]
    VarianceBelowFloor { sigma2: f64, floor: f64 },

    #[error("epsilon must be finite and > 0, got {0}")]
    InvalidEpsilon(f64),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter L2 norm {param_norm:.4e})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },

    #[error("ensemble member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("prediction list is empty")]
    EmptyPredictions,

    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("variance must be > 0, got {0}")]
    NonPositiveVariance(f64),

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unknown target column `{0}`")]
    UnknownColumn(String),

    #[error("{rejected} of {total} rows rejected, above the allowed threshold")]
    TooManyRejected { rejected: usize, total: usize },

    #[error("malformed data: {0}")]
    MalformedData(String),

    #[error("degenerate target: training targets are constant ({0})")]
    DegenerateTarget(f64),

    #[error("fraction {0} is out of range")]
    FractionOutOfRange(f64),

    #[error("subsample size {psi} is invalid for {rows} rows")]
    InvalidSubsample { psi: usize, rows: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("split audit failed: {0}")]
    SplitAudit(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the optimization or numerics rather than
    /// by the input data or the caller.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } | Error::VarianceBelowFloor { .. } => true,
            Error::Member { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
