use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid gait profile: {0}")]
    InvalidProfile(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("spectrogram is already noise-reduced")]
    AlreadyDenoised,

    #[error("spectrogram must be noise-reduced first")]
    NotDenoised,

    #[error("direction mismatch: requested {requested} but signal energy lies on the opposite Doppler half-plane")]
    DirectionMismatch { requested: &'static str },

    #[error("no Doppler bins left after excluding |f| <= {0:.2} Hz")]
    NoBinsLeft(f64),

    #[error("frame rate {frame_rate:.3} Hz cannot resolve cadences up to {max_cadence:.3} Hz")]
    CadenceNyquist { frame_rate: f64, max_cadence: f64 },

    #[error("cutoff {cutoff:.2} Hz is above the Nyquist frequency {nyquist:.2} Hz")]
    CutoffAboveNyquist { cutoff: f64, nyquist: f64 },

    #[error("constant signal: {0}")]
    Constant(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("class {class} has {count} members, fewer than k = {k}")]
    TooFewMembers { class: String, count: usize, k: usize },

    #[error("fold discipline violated: test index {0} used in a training-side fit")]
    Leakage(usize),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
