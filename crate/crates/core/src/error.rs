use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the ladder pipeline.
///
/// Variants are split between input validation problems (bad files, bad
/// geometry, inconsistent curves) and runtime failures (I/O, encoder
/// subprocess). [`Error::is_validation`] drives the CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),

    #[error("unsupported colorspace `{0}` (only 8-bit 4:2:0 is supported)")]
    UnsupportedColorspace(String),

    #[error("truncated frame payload: frame {frame} expected {expected} bytes, found {found}")]
    TruncatedPayload {
        frame: usize,
        expected: usize,
        found: usize,
    },

    #[error("file size {size} is not a multiple of the frame size {frame_size}")]
    SizeMismatch { size: u64, frame_size: u64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid direction: {0}")]
    Direction(String),

    #[error("invalid face coordinate: {0}")]
    FaceCoord(String),

    #[error("projection mismatch: {0}")]
    Projection(String),

    #[error("metric input mismatch: {0}")]
    MetricMismatch(String),

    #[error("invalid RD curve: {0}")]
    Curve(String),

    #[error("invalid ladder: {0}")]
    Ladder(String),

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("missing input for {0}")]
    MissingInput(String),

    #[error("missing analysis artifact {path} required by {node}")]
    MissingAnalysis { node: String, path: PathBuf },

    #[error("encoder failed on node {node}: {diagnostic}")]
    Backend { node: String, diagnostic: String },

    #[error("encoder binary not found: {0}")]
    EncoderNotFound(String),

    #[error("{failed} node(s) failed, {skipped} dependent node(s) skipped: {first}")]
    PartialFailure {
        failed: usize,
        skipped: usize,
        first: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid record: {0}")]
    Record(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a pipeline stage label.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error stems from invalid user input rather than a
    /// runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Backend { .. }
            | Error::PartialFailure { .. }
            | Error::EncoderNotFound(_)
            | Error::MissingAnalysis { .. } => false,
            Error::Stage { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
