use std::fmt;

use crate::helical::WaveVector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("wavevector {0} is the zero vector")]
    ZeroWaveVector(WaveVector),

    #[error("wavevector {k} is parallel to gamma {gamma:?}; helical basis is undefined")]
    DegenerateDirection { k: WaveVector, gamma: [f64; 3] },

    #[error("triad closure violated: k + p + q = {0}, expected 0,0,0")]
    ClosureViolated(WaveVector),

    #[error("reality condition violated at ({wavevector}, s={parity}): a_s(-k) must equal conj(a_s(k))")]
    RealityViolated { wavevector: WaveVector, parity: i8 },

    #[error("deviation increment is not defined for the deterministic model")]
    NoDeviation,

    #[error("noise path holds {have} increments but {need} are required")]
    InsufficientNoise { have: usize, need: usize },

    #[error("duration {duration} is not an integer multiple of dt {dt}")]
    NotMultiple { duration: f64, dt: f64 },

    #[error("filter degeneracy: zero total likelihood at t = {t}")]
    Degeneracy { t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Error::Config {
            key: key.into(),
            message: message.to_string(),
        }
    }
}
