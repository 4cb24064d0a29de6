use thiserror::Error;

/// Errors raised by the simulation, filtering, learning and estimation code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("action {action} is outside the action space of size {num_actions}")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("observation at step {step} has zero likelihood under the current belief")]
    ImpossibleObservation { step: usize },

    #[error("particle set degenerated at step {step}: all weights are zero")]
    DegenerateParticles { step: usize },

    #[error("truncation horizon is undefined: the exploration drift (1 - lambda)(r - l) must be positive")]
    UndefinedHorizon,

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },

    #[error("correlation is undefined for constant or too short series")]
    UndefinedCorrelation,
}

pub type Result<T> = core::result::Result<T, Error>;
