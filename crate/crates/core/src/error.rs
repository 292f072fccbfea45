use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite state produced at coordinate {coordinate}")]
    NonFiniteState { coordinate: usize },

    #[error("stopping condition not met within {steps} steps")]
    BudgetExhausted { steps: u64, final_point: Vec<f64> },

    #[error("mesh side {h} does not tile box side {side} (axis {axis})")]
    IncommensurateMesh { h: f64, side: f64, axis: usize },

    #[error("generators {first} and {second} coincide")]
    DegenerateGenerators { first: usize, second: usize },

    #[error("cell {cell} qualifies for both metastable sets")]
    OverlappingRegions { cell: usize },

    #[error("metastable index set {which} is empty")]
    NonviableRegions { which: &'static str },

    #[error("cell {cell}: {censored} of {launched} trajectories exhausted the step budget")]
    ExcessiveCensoring {
        cell: usize,
        censored: u64,
        launched: u64,
    },

    #[error("cell {cell} contains only {nodes} reference nodes (need at least 4)")]
    ResolutionTooCoarse { cell: usize, nodes: usize },

    #[error("point {point:?} lies outside the domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("cell {cell} has outer-normal matrix of rank {rank} < {dim}")]
    RankDeficientCell {
        cell: usize,
        rank: usize,
        dim: usize,
    },

    #[error("non-finite current vector in cell {cell}")]
    NonFiniteSolution { cell: usize },

    #[error("start point {point:?} is not on the boundary of the A-representing cells")]
    BadStart { point: Vec<f64> },

    #[error("streamlines do not share a start point")]
    MismatchedStart,

    #[error("linear solve reached residual {residual:e} > {tol:e} after {iterations} iterations")]
    NoConvergence {
        residual: f64,
        tol: f64,
        iterations: usize,
    },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },

    #[error("log-log fit needs positive inputs, got {value}")]
    NonPositiveInput { value: f64 },

    #[error("reactive-segment target {target} not reached within {steps} steps (got {reached})")]
    SamplingBudget {
        target: u64,
        reached: u64,
        steps: u64,
    },

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
