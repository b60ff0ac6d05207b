use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown path segment `{0}`")]
    UnknownSegment(String),

    #[error("photon counts saturated: (n - d)/N = {0} is not below 1")]
    Saturated(f64),

    #[error("separation angle {0} rad exceeds pi")]
    AngleOutOfRange(f64),

    #[error("inconsistent histogram: running count {running} reaches trial count {trials} at bin {bin}")]
    InconsistentHistogram { bin: usize, running: f64, trials: f64 },

    #[error("histogram tail too short: {len} bins, need at least {min}")]
    TailTooShort { len: usize, min: usize },

    #[error("frame plan has {plan} slots but the frame has {frame}")]
    PlanLength { plan: usize, frame: usize },

    #[error("invalid attack combination: {0}")]
    InvalidCombination(String),

    #[error("malformed histogram row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
