use thiserror::Error;

/// Errors raised by tensor construction, graph operations, layers and losses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: dimensions must be non-empty and positive")]
    InvalidShape(Vec<usize>),
    #[error("data length {actual} does not match shape volume {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("expected rank {expected}, got shape {actual:?}")]
    Rank { expected: usize, actual: Vec<usize> },
    #[error("{op}: shape {rhs:?} is not broadcastable to {lhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("division by a value with magnitude below {guard}")]
    DivisionDomain { guard: f64 },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("backward root must hold a single element, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("function evaluation produced a non-finite value")]
    NonFiniteEvaluation,
    #[error("{op}: expected {expected} input channels, got {actual}")]
    ChannelMismatch { op: &'static str, expected: usize, actual: usize },
    #[error("kernel extent {extent} exceeds padded input extent {input}")]
    KernelTooLarge { extent: usize, input: usize },
    #[error("{op}: spatial size {h}x{w} is below the minimum {min}x{min}")]
    InputTooSmall { op: &'static str, h: usize, w: usize, min: usize },
    #[error("concat: batch/spatial dims {actual:?} differ from {expected:?}")]
    SpatialMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("target is not one-hot (first offending pixel index {0})")]
    NotOneHot(usize),
    #[error("prediction channel sum {sum} deviates from 1 at pixel {pixel}")]
    NotNormalized { pixel: usize, sum: f64 },
    #[error("expected {expected} loss weights, got {actual}")]
    WeightLengthMismatch { expected: usize, actual: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
}
