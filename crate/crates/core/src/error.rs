use thiserror::Error;

/// Errors raised while building models or evaluating observables.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LaserError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),

    #[error("gamma = {gamma} too large: 1 - gamma*(G'G + L'L) is negative at level {level}")]
    GammaTooLarge { gamma: f64, level: usize },

    #[error("dense oracle refused dimension {dim} (limit {limit})")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("band-0 kernel is not one-dimensional: {0}")]
    DegenerateKernel(String),

    #[error("band-1 block is singular: {0}")]
    SingularBandOne(String),

    #[error("exponential action failed to meet tolerance: {0}")]
    ExpmTolFailure(String),

    #[error("negative steady-state population {value:e} at level {level}")]
    NegativePopulation { level: usize, value: f64 },

    #[error("horizon too short: {0}")]
    HorizonTooShort(String),

    #[error("coherence formula out of domain: {0}")]
    OutOfDomain(String),

    #[error("power-law fit needs at least {needed} positive samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("optimizer did not reproduce its best value: {0}")]
    OptimizerStall(String),

    #[error("linear solve failed: {0}")]
    SingularMatrix(String),
}

pub type Result<T> = std::result::Result<T, LaserError>;
