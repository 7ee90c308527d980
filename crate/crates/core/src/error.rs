//! Error types shared across the crate.

use alloc::string::String;

/// A configuration or argument combination that cannot be processed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

/// A dataset or intermediate product that violates a structural invariant.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("validation failed: {0}")]
pub struct ValidationError(pub String);

/// A tensor or batch whose dimensions do not match the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("shape mismatch: expected length {expected}, got {got}")]
pub struct ShapeError {
    pub expected: usize,
    pub got: usize,
}

/// Training aborted because the loss became non-finite.
///
/// `last_finite` is the index of the last epoch (pretraining) or iteration
/// (fine-tuning) that still produced a finite loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("training diverged: loss became non-finite after step {last_finite}")]
pub struct TrainingError {
    pub last_finite: usize,
}

/// Input whose geometry admits no meaningful decomposition.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("degenerate input: {0}")]
pub struct DegenerateError(pub String);
