use std::path::PathBuf;

/// Errors produced by the painting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid stroke: {0}")]
    InvalidStroke(String),

    #[error("degenerate tangent at t = {t}")]
    DegenerateTangent { t: f64 },

    #[error("degenerate stroke: {0}")]
    DegenerateStroke(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("k = {k} exceeds the number of points ({n})")]
    InfeasibleK { k: usize, n: usize },

    #[error("stroke {index} is not quantized against the palette: {reason}")]
    Unquantized { index: usize, reason: String },

    #[error("invalid motion sample: {0}")]
    InvalidSample(String),

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("degenerate rigid body: markers are collinear")]
    DegenerateRigidBody,

    #[error("layout error: {0}")]
    Layout(String),

    #[error("value outside [0, 1]: {0}")]
    Domain(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
