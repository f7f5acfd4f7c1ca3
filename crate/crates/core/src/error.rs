use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid dimensions too small: nx={nx}, ny={ny}, h={h} (need nx, ny >= 2 and h > 0)")]
    GridTooSmall { nx: usize, ny: usize, h: f64 },

    #[error("invalid partition {rows}x{cols} for a {nx}x{ny} grid")]
    InvalidPartition {
        rows: usize,
        cols: usize,
        nx: usize,
        ny: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parameter {index} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt} violates the diffusion stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("forward evaluation failed at theta={theta:?}: {reason}")]
    Evaluation { theta: Vec<f64>, reason: String },

    #[error("kernel matrix not positive definite (jitter reached {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("target density returned NaN at theta={0:?}")]
    NanDensity(Vec<f64>),

    #[error("chain {chain}: {source}")]
    Chain {
        chain: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
