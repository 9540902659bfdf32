use thiserror::Error;

/// Which side of a function's range an argument fell off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RangeSide {
    Below,
    Above,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("predicted ball of {predicted} states ({bytes} bytes) exceeds the memory cap of {cap} bytes")]
    MemoryCap {
        predicted: u64,
        bytes: u64,
        cap: u64,
    },

    #[error("radius {requested} exceeds ball radius {available}")]
    RadiusTooSmall { requested: u32, available: u32 },

    #[error("size {requested} exceeds cap {cap}")]
    SizeCap { requested: usize, cap: usize },

    #[error("set is empty")]
    EmptySet,

    #[error("no convergence after {iterations} iterations (best {best:e}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        best: f64,
        residual: f64,
    },

    #[error("argument outside tabulated range: {0}")]
    Range(String),

    #[error("degenerate growth segment: Gr^-1({n}) and Gr^-1({n}/2) too close")]
    Degenerate { n: f64 },

    #[error("argument {x} is out of range ({side:?})")]
    OutOfRange { x: f64, side: RangeSide },

    #[error("function is not doubling at exponential scale (min ratio {ratio:e} < {threshold:e})")]
    NotDoubling { ratio: f64, threshold: f64 },

    #[error("insufficient data: need {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },

    #[error("leaked mass {leaked:e} exceeds budget {budget:e}")]
    Leakage { leaked: f64, budget: f64 },

    #[error("hypothesis fails at n = {witness}")]
    HypothesisFail { witness: f64 },

    #[error("invalid generator id {0}")]
    InvalidGenerator(usize),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("set member {0} is adjacent to the ball boundary")]
    InteriorMargin(u32),

    #[error("element is outside the enumerated ball")]
    OutsideBall,

    #[error("malformed ball segment: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable upper-case code for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MemoryCap { .. } => "MEMORY_CAP",
            Error::RadiusTooSmall { .. } => "RADIUS_TOO_SMALL",
            Error::SizeCap { .. } => "SIZE_CAP",
            Error::EmptySet => "EMPTY_SET",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::Range(_) => "RANGE",
            Error::Degenerate { .. } => "DEGENERATE",
            Error::OutOfRange { .. } => "OUT_OF_RANGE",
            Error::NotDoubling { .. } => "NOT_DOUBLING",
            Error::InsufficientData { .. } => "INSUFFICIENT_DATA",
            Error::Leakage { .. } => "LEAKAGE",
            Error::HypothesisFail { .. } => "HYPOTHESIS_FAIL",
            Error::InvalidGenerator(_) => "INVALID_GENERATOR",
            Error::InvalidKernel(_) => "INVALID_KERNEL",
            Error::InvalidChain(_) => "INVALID_CHAIN",
            Error::InteriorMargin(_) => "INTERIOR_MARGIN",
            Error::OutsideBall => "OUTSIDE_BALL",
            Error::Format(_) => "FORMAT",
            Error::Io(_) => "IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
