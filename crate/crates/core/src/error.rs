use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = SweError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SweError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    /// Depth was non-positive at a quadrature point where an invertible
    /// weighted mass matrix was required.
    #[error("non-positive depth {value:e} at element {element}, quadrature point {point}")]
    DepthPositivity {
        element: usize,
        point: usize,
        value: f64,
    },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error(
        "nonlinear iteration failed after {iterations} iterations \
         (residual u {residual_u:e}, h {residual_h:e}): {reason}"
    )]
    NonConvergence {
        iterations: usize,
        residual_u: f64,
        residual_h: f64,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("parse error on line {line}, key `{key}`: {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SweError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        SweError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
