use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("parameter `{name}` = {value} outside allowed range {allowed}")]
    Domain {
        name: &'static str,
        value: f64,
        allowed: &'static str,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("incompatible configurations: {0}")]
    Incompatible(String),

    #[error("time step {dt} violates the stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },

    #[error("non-finite state after step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("value {value} outside velocity grid [{min}, {max}]")]
    RangeViolation { value: f64, min: f64, max: f64 },

    #[error("trajectory has no retained step record (enable `retain_steps`)")]
    MissingNoiseRecord,

    #[error("degenerate rate fit: {usable} usable points, at least 4 required")]
    DegenerateFit { usable: usize },

    #[error("experiment assertion failed: {0}")]
    Assertion(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(name: &'static str, value: f64, allowed: &'static str) -> Error {
    Error::Domain { name, value, allowed }
}
