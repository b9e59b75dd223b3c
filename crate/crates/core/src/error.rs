use crate::model::Representation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state has {got} entries but the model has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },

    #[error("representation mismatch: expected {expected:?}, got {got:?}")]
    RepresentationMismatch {
        expected: Representation,
        got: Representation,
    },

    #[error("node {node} out of range for a model with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("self-coupling on node {0}")]
    SelfEdge(usize),

    #[error("invalid spin value {value} at node {node}")]
    InvalidSpin { node: usize, value: i8 },

    #[error("clamped node {node} holds {got}, expected {expected}")]
    ClampViolation { node: usize, expected: i8, got: i8 },

    #[error("{free} free nodes exceed the exact-enumeration limit of {limit}")]
    TooManyFreeNodes { free: usize, limit: usize },

    #[error("weight {0} does not fit in 32 bits")]
    WeightOverflow(i64),

    #[error("inverse temperature must be finite and nonnegative, got {0}")]
    InvalidBeta(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("improper coloring: edge ({0}, {1}) joins nodes of the same color")]
    ImproperColoring(usize, usize),

    #[error("degree bound k={k} too small: {reason}")]
    DegreeBoundTooSmall { k: usize, reason: String },

    #[error("gate {gate}: {msg}")]
    PinConflict { gate: usize, msg: String },

    #[error("DIMACS parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("zero is not a valid LFSR state")]
    ZeroLfsrState,

    #[error("run contains no sweeps")]
    EmptyRun,

    #[error("ground energy unknown for an energy-based target")]
    UnknownGroundEnergy,

    #[error("distributions have different support sizes ({0} vs {1})")]
    SupportMismatch(usize, usize),

    #[error("reference probability is zero at state {0} where the sample has mass")]
    ZeroReference(usize),

    #[error("mask kind mismatch: expected {expected}, got {got}")]
    MaskKindMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
