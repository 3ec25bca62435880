use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bit sequence of length {len} is not a multiple of {bits_per_symbol} bits per symbol")]
    BitLength { len: usize, bits_per_symbol: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("forward cache was produced by different network parameters")]
    StaleCache,

    #[error("channel estimation needs at least one pilot observation")]
    EmptyObservation,

    #[error("pilot symbol or pilot power is zero")]
    ZeroPilot,

    #[error("least-squares CSI is undefined for superposed (two-slot) pilots")]
    UnidentifiablePilots,

    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("model file is corrupt: {0}")]
    Corrupt(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model/frame mismatch: {0}")]
    ModelMismatch(String),

    #[error("no trained model for {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
