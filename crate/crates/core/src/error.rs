use thiserror::Error;

use crate::lattice::SiteIndex;
use crate::search::SearchTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("NonPositiveProbability: p{index} = {value} must be finite and > 0")]
    NonPositiveProbability { index: usize, value: f64 },

    #[error("NotNormalized: step probabilities sum to {sum}, expected 1 within 1e-12")]
    NotNormalized { sum: f64 },

    #[error("DegenerateKernel: zero drift (|p1-p3| + |p2-p4| = 0), the walk is recurrent")]
    DegenerateKernel,

    #[error("InvalidMean: geometric mean {0} must be >= 1")]
    InvalidMean(f64),

    #[error("InvalidParams: {0}")]
    InvalidParams(String),

    #[error("EmptySiteSet: a measurement window needs at least one site")]
    EmptySiteSet,

    #[error("WindowTooSmall: {0}")]
    WindowTooSmall(String),

    #[error("HorizonExceeded: no truncation after {0} steps")]
    HorizonExceeded(usize),

    #[error("InsufficientData: {0}")]
    InsufficientData(String),

    #[error("QuadratureFailure: {0}")]
    QuadratureFailure(String),

    #[error("NoSeedFound: no site with a count in range by step {step}")]
    NoSeedFound { step: u64 },

    #[error("MaxItersExceeded: no fixpoint after {} iterations (last site {:?})", .0.iterates.len(), .0.iterates.last().map(|it| it.site))]
    MaxItersExceeded(Box<SearchTrace>),

    #[error("EmptyInput: {0}")]
    EmptyInput(String),

    #[error("site {0:?} lies outside the field window")]
    OutsideWindow(SiteIndex),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
