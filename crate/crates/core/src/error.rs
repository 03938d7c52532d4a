use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("waveform is empty")]
    Empty,
    #[error("waveform contains non-finite samples")]
    NonFinite,
    #[error("sampling rate must be positive")]
    BadRate,
    #[error("signal is silent (all samples are zero)")]
    Degenerate,
    #[error("unsupported resampling ratio {from} Hz -> {to} Hz")]
    UnsupportedRatio { from: u32, to: u32 },
    #[error("invalid scale ladder: {0}")]
    InvalidLadder(String),
    #[error("no scale in the ladder reaches the energy threshold")]
    NoScaleSelected,
    #[error("invalid frequency band [{lo}, {hi}] Hz")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: u32, right: u32 },
    #[error("input of {len} samples is shorter than the required {min}")]
    TooShort { len: usize, min: usize },
    #[error("invalid scale index {0}")]
    BadScale(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid inpainting mask: {0}")]
    InvalidMask(String),
    #[error("training diverged at scale {scale}, epoch {epoch}: {detail}")]
    Diverged {
        scale: usize,
        epoch: usize,
        detail: String,
    },
    #[error("parameter data does not match the network layout: {0}")]
    ParamLayout(String),
}

pub type Result<T> = core::result::Result<T, Error>;
