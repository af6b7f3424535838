use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid bandwidth: every entry must be finite and > 0")]
    InvalidBandwidth,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergence kind {0} has no f-function")]
    UnsupportedKind(String),

    #[error("degenerate action: radius {0} below threshold")]
    DegenerateAction(f64),

    #[error("replay memory not ready: {0}")]
    NotReady(&'static str),

    #[error("environment too sparse: both memories not filled after {attempts} attempts")]
    EnvironmentTooSparse { attempts: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
