use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("stage index {stage} out of range for {num_stages} stages")]
    StageOutOfRange { stage: usize, num_stages: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Batch size at or below `C2 / eps^2`, where the iteration count is undefined.
    #[error("batch size {batch} outside admissible domain (must exceed C2/eps^2 = {threshold})")]
    BatchOutOfDomain { batch: f64, threshold: f64 },

    #[error("learning rate {lr} not below 2/L = {limit}")]
    StepTooLarge { lr: f64, limit: f64 },

    #[error("no admissible batch size in grid {lo}..={hi} (threshold C2/eps^2 = {threshold})")]
    EmptyGrid { lo: u64, hi: u64, threshold: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}
