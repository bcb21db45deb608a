use std::path::PathBuf;

use thiserror::Error;

use crate::counting::TriangleFit;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate basis: |det| = {det:e} is below {threshold:e}")]
    DegenerateBasis { det: f64, threshold: f64 },

    #[error("lattice has no horizontal vector within {tolerance_deg} degrees")]
    NoCanonicalForm { tolerance_deg: f64 },

    #[error("invalid weave pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("thread spacing of {spacing_px:.3} px violates the 2 px sampling limit")]
    Aliasing { spacing_px: f64 },

    #[error("image of {width}x{height} px is smaller than the {required} px segment")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("spectral triangle fit failed: {reason}")]
    FitFailed {
        reason: String,
        best: Option<Box<TriangleFit>>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: no resolution given and no sidecar metadata found")]
    MissingResolution { path: PathBuf },

    #[error("{path}: multi-frame images are not supported")]
    MultiFrame { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// Stable machine-readable category used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DegenerateBasis { .. } | Error::NoCanonicalForm { .. } => "lattice",
            Error::InvalidPattern(_) | Error::InvalidParameter(_) => "invalid-input",
            Error::Aliasing { .. } => "aliasing",
            Error::ImageTooSmall { .. } => "image-too-small",
            Error::InsufficientData(_) => "insufficient-data",
            Error::FitFailed { .. } => "fit-failed",
            Error::Format { .. } | Error::MultiFrame { .. } => "format",
            Error::MissingResolution { .. } => "missing-resolution",
            Error::Io { .. } => "io",
            Error::Serialization(_) => "serialization",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
