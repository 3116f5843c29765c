use thiserror::Error;

/// Errors raised anywhere in the distillation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("size mismatch: {what} (expected {expected}, got {actual})")]
    Size {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("alignment failed: best correlation {best:.4} below threshold {threshold:.4}")]
    Alignment { best: f64, threshold: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("matrix construction failed: {0}")]
    Construction(String),

    #[error("no code in the rate table covers qber bound {0:.4}")]
    NoCode(f64),

    #[error("numeric precision exceeded in FFT hashing (max rounding error {0:.3})")]
    Precision(f64),

    #[error("authentication failure: {0}")]
    Authentication(String),

    #[error("key material exhausted: need {needed} bits, {available} available")]
    KeyExhausted { needed: usize, available: usize },

    #[error("session aborted at {stage}: {reason}")]
    Abort { stage: &'static str, reason: String },

    #[error("channel closed")]
    ChannelClosed,

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn size(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Size { what, expected, actual }
    }
}
