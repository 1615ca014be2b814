use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ragged channels: channel 0 has {expected} samples, channel {channel} has {found}")]
    RaggedChannels {
        expected: usize,
        channel: usize,
        found: usize,
    },
    #[error("insufficient statistics: need at least 2 frames, got {0}")]
    InsufficientStatistics(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular coherence matrix at omega = {omega} rad/s")]
    SingularCoherence { omega: f64 },
    #[error("unknown variant tag {0:?}")]
    UnknownVariant(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("unsatisfiable SNR: target is silent")]
    UnsatisfiableSnr,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::ShapeMismatch(msg.into()))
}
