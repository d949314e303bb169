use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every token row is masked")]
    AllMasked,
    #[error("need at least two languages for layer {layer}, found {found}")]
    MissingLanguage { layer: i64, found: usize },
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("point dimension {0} is below 2")]
    DimensionTooSmall(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 sentences, got {0}")]
    TooFewSentences(usize),
    #[error("need at least 2 languages, got {0}")]
    TooFewLanguages(usize),
    #[error("metric {metric} failed on pair ({lang_a}, {lang_b}): {source}")]
    Pair {
        metric: &'static str,
        lang_a: String,
        lang_b: String,
        #[source]
        source: Box<Error>,
    },
    #[error("internal consistency violated: {0}")]
    Consistency(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no Renyi orders given")]
    EmptyOrders,
    #[error("privacy loss is unbounded at every order")]
    Unbounded,
    #[error("no noise multiplier in [{lo}, {hi}] reaches epsilon {target}")]
    Unsatisfiable { target: f64, lo: f64, hi: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("step {step} outside schedule of {total} steps")]
    OutOfRange { step: usize, total: usize },
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },
    #[error("interpretability margin undefined: {0}")]
    UndefinedMargin(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
