use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requested for a value that was not produced by a recorded forward pass")]
    NoForward,

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("rank-deficient neighborhood at vertex {vertex}")]
    RankDeficient { vertex: usize },

    #[error("curvature estimation failed on {failed} of {total} vertices (first: {first})")]
    CurvatureCoverage {
        failed: usize,
        total: usize,
        first: usize,
    },

    #[error("sector {sector} has {count} vertices (need at least 3)")]
    EmptySector { sector: usize, count: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
