use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x1}, {x2}) lies outside the closed sector: {reason}")]
    OutsideSector { x1: f64, x2: f64, reason: &'static str },

    #[error("point ({w1}, {w2}) lies outside the closed unit upper half-disk")]
    OutsideHalfDisk { w1: f64, w2: f64 },

    #[error("map derivative is singular at the corner for beta = {beta} < 1")]
    SingularDerivative { beta: f64 },

    #[error("Green function evaluated at coincident points ({x1}, {x2})")]
    Coincident { x1: f64, x2: f64 },

    #[error("Kelvin image undefined for a source at the corner (|f(y)| = {modulus:e})")]
    SourceAtCorner { modulus: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failed at step {step}: non-finite velocity for {what} {index}")]
    Integration {
        step: usize,
        what: &'static str,
        index: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
