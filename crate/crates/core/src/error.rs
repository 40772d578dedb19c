use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported grid: {0}")]
    UnsupportedGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field is in {found} representation, expected {expected}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid norm argument: {0}")]
    InvalidNorm(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("density {min_rho:.6e} fell below the floor {floor:.6e}")]
    DensityFloorViolation { min_rho: f64, floor: f64 },

    #[error("non-finite value in {field} after step")]
    NonFinite { field: &'static str },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("samples are not uniformly spaced in time (step {index})")]
    NonUniformSampling { index: usize },

    #[error("series must be strictly positive (sample {index} = {value})")]
    NonPositiveSeries { index: usize, value: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach the simulation time at which an error surfaced.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::AtTime { .. } => self,
            other => Error::AtTime {
                t,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error, skipping time annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerical solve itself (as opposed to input or IO errors).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::DensityFloorViolation { .. } | Error::NonFinite { .. }
        )
    }
}
