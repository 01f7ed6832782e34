use thiserror::Error;

/// Errors raised by the samplers, event-time routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A proposed event had a true rate above its thinning bound, which
    /// means the bound was derived incorrectly for this state.
    #[error("rate {rate} exceeds bound {bound} for clock {clock} at s = {s}")]
    BoundViolation {
        clock: usize,
        s: f64,
        rate: f64,
        bound: f64,
    },

    #[error("root isolation failed: {0}")]
    RootIsolation(String),

    #[error("no samples fall in calibration bin {index} (beta = {beta})")]
    EmptyBin { index: usize, beta: f64 },

    #[error("singular or indefinite matrix: {0}")]
    Singular(&'static str),

    #[error("invalid config at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_all_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
