//! Error type shared by all library modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SenetError {
    #[error("empty class")]
    EmptyClass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(
        "eigensolver did not converge: off-diagonal residual {residual:.3e} after {sweeps} sweeps"
    )]
    NoConvergence { residual: f64, sweeps: usize },

    #[error("basis is not orthonormal: max deviation {0:.3e}")]
    NonOrthonormalBasis(f64),

    #[error("negative lambda: {0}")]
    NegativeLambda(f64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("label not in episode: query label {0}")]
    LabelNotInEpisode(usize),

    #[error("label misalignment: {0}")]
    LabelMisalignment(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("training diverged: non-finite loss at batch {batch}")]
    Diverged { batch: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SenetError>;
