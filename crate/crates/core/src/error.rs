use thiserror::Error;

/// Errors raised by the propagation, polar, trajectory, and geometry stages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("packet truncated: edge amplitude {edge:.3e} exceeds {limit:.1e} of the peak")]
    PacketTruncated { edge: f64, limit: f64 },
    #[error("non-finite field sample at index {index}")]
    NonFiniteField { index: usize },
    #[error("phase under-resolved between grid points {index} and {}", index + 1)]
    UnwrapAmbiguous { index: usize },
    #[error("every grid point is below the node threshold")]
    AllMasked,
    #[error("position {x} outside [{min}, {max}]")]
    OutOfRange { x: f64, min: f64, max: f64 },
    #[error("time {t} outside the available field window [{start}, {end}]")]
    OutOfWindow { t: f64, start: f64, end: f64 },
    #[error("sample at x = {x} lies in a node region")]
    NodeRegion { x: f64 },
    #[error("trajectory {id} left the grid at t = {t}")]
    LeftGrid { id: usize, t: f64 },
    #[error("metric is singular (|det g| = {det:.3e})")]
    SingularMetric { det: f64 },
    #[error("mismatched input: {0}")]
    Mismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
