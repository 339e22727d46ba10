use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weights are not normalized (sum = {sum})")]
    UnnormalizedInput { sum: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("random feature dimension is zero")]
    ZeroDim,

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("design incompatible with population: {0}")]
    IncompatibleDesign(String),

    #[error("empty selection after {attempts} attempts")]
    EmptySelection { attempts: usize },

    #[error("invalid inclusion probability {value} at position {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("empty region: no member unit carries positive weight")]
    EmptyRegion,

    #[error("invalid survey weight {value} at row {row} (weights must be >= 1)")]
    InvalidWeights { row: usize, value: f64 },

    #[error("degenerate resample: all multipliers zero after {attempts} attempts")]
    DegenerateDraw { attempts: usize },

    #[error("resample draws do not match: {0}")]
    MismatchedDraws(String),

    #[error("need at least two distinct PSUs, found {found}")]
    TooFewPsus { found: usize },

    #[error("invalid split candidate: {0}")]
    InvalidSplit(&'static str),

    #[error("split side of tree carries no positive weight")]
    EmptySplitSide,

    #[error("no tree has estimation mass at the query point")]
    NoSupport,

    #[error("covariance is singular after ridge regularization")]
    SingularCovariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error in column `{column}`{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Schema {
        column: String,
        row: Option<usize>,
        message: String,
    },

    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
