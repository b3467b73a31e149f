use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("invalid bounding box ({x}, {y}, {w}, {h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("layout has no elements")]
    EmptyLayout,

    #[error("layout has {count} elements, limit is {limit}")]
    TooManyElements { count: usize, limit: usize },

    #[error("unknown label {label:?}{}", .index.map(|i| format!(" at element {i}")).unwrap_or_default())]
    UnknownLabel { label: String, index: Option<usize> },

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),

    #[error("parse error at token {index}: expected {expected}, found {found}")]
    Parse {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("condition mismatch: {0}")]
    ConditionMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("vocabulary hash mismatch: model has {model}, active taxonomy has {active}")]
    VocabMismatch { model: String, active: String },

    #[error("record {id:?} rejected ({reason}): {detail}")]
    InvalidRecord {
        id: String,
        reason: &'static str,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
