use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: index {index} out of range for {len} rows")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("no teacher target for item {0:?}")]
    MissingTarget(String),
    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),
    #[error("unknown item index {0}")]
    UnknownItem(usize),
    #[error("sensory table has no rows for items {0:?}")]
    MissingSensoryRows(Vec<String>),
    #[error("rank must be at least 1, got {0}")]
    InvalidRank(usize),
    #[error("paired inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("audit record {index} has {got} votes, expected 3")]
    VoteCount { index: usize, got: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("sequence length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
}
