use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid query: {0:?}")]
    InvalidQuery(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt log: {malformed} of {total} lines are malformed")]
    CorruptLog { malformed: usize, total: usize },

    #[error("cannot aggregate an empty set of instances")]
    EmptyAggregate,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("language model corpus is empty")]
    EmptyCorpus,

    #[error("rating {0} is outside 1..=5")]
    InvalidRating(i64),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("shape mismatch: expected {expected} indicators, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("AUC is undefined when only one class is present")]
    UndefinedAuc,

    #[error("target precision {target} unattainable (max achievable {max_precision})")]
    PrecisionUnattainable { target: f64, max_precision: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trend check failed for {metric}: {detail}")]
    Trend { metric: String, detail: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("unsupported artifact: {0}")]
    Artifact(String),
}

impl Error {
    /// Short machine-readable name for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidQuery(_) => "invalid_query",
            Error::Io(_) => "io",
            Error::CorruptLog { .. } => "corrupt_log",
            Error::EmptyAggregate => "empty_aggregate",
            Error::InvalidValue(_) => "invalid_value",
            Error::EmptyCorpus => "empty_corpus",
            Error::InvalidRating(_) => "invalid_rating",
            Error::Stratification(_) => "stratification",
            Error::DegenerateTraining(_) => "degenerate_training",
            Error::Shape { .. } => "shape",
            Error::UndefinedAuc => "undefined_auc",
            Error::PrecisionUnattainable { .. } => "precision_unattainable",
            Error::Config(_) => "config",
            Error::Trend { .. } => "trend",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Artifact(_) => "artifact",
        }
    }
}
