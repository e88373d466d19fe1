use thiserror::Error;

use super::ModelKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("not enough training samples: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("model has not been fitted")]
    NotFitted,

    #[error("solver did not converge within {iterations} iterations (violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("training diverged after {attempts} attempts")]
    Diverged { attempts: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("all member predictions are zero")]
    AllZeroPredictions,

    #[error("ensemble weights sum to {0:e}; cannot normalise")]
    DegenerateWeights(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("feature `{0}` is missing from the sample")]
    MissingFeature(&'static str),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("{0} is not a standalone model")]
    NotStandalone(ModelKind),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("snapshot: {0}")]
    Snapshot(String),
}
