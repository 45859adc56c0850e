use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid range: lo ({lo}) must be < hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("functions live on different grids")]
    GridMismatch,
    #[error("point {w} outside domain [{lo}, {hi}]")]
    OutOfDomain { w: f64, lo: f64, hi: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("logistic labels must be -1 or +1, got {0}")]
    InvalidLabel(f64),
    #[error("covariate kind does not match the problem operator")]
    KindMismatch,
    #[error("empty input")]
    EmptyInput,
    #[error("{points} points cannot identify a fit needing {required}")]
    DimensionTooLarge { points: usize, required: usize },
    #[error("learner inputs must be strictly increasing")]
    NonMonotoneInputs,
    #[error("invalid learner spec: {0}")]
    InvalidLearner(String),
    #[error("Landweber iteration requires the squared loss")]
    WrongLoss,
    #[error("base learner failed at iteration {iteration}: {source}")]
    LearnerFit {
        iteration: usize,
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("target domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("invalid fold count {k} for {n} samples")]
    InvalidFolds { k: usize, n: usize },
}
