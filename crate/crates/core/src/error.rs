use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a proper rotation (orthonormality error {ortho:.3e}, det {det})")]
    NotARotation { ortho: f64, det: f64 },

    #[error("joint axes are parallel within {tol:e} rad (angle {angle:e} rad)")]
    ParallelAxes { angle: f64, tol: f64 },

    #[error("axis `{name}` is not unit length (norm {norm})")]
    NonUnitAxis { name: &'static str, norm: f64 },

    #[error("vector pair is degenerate: the two directions are parallel")]
    DegenerateVectorPair,

    #[error("vector pairs are inconsistent: {0}")]
    InconsistentVectorPair(String),

    #[error("unknown movement `{0}` (expected no-M, mo-M or rd-M)")]
    UnknownMovement(String),

    #[error("unknown estimation mode `{0}` (expected m1 or m2)")]
    UnknownMode(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("scenario file {path}: {message}")]
    Scenario { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
