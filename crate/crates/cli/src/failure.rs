use std::fmt;

use stochavg_core::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failed run: exit code plus a message naming the failing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    /// Classifies a library error raised during `stage`.
    pub fn from_core(stage: &str, e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_)
            | Error::Parse(_)
            | Error::InvalidGrid(_)
            | Error::GridTooCoarse { .. }
            | Error::DimensionMismatch { .. }
            | Error::FdStepInvalid(_)
            | Error::ModelKindMismatch(_)
            | Error::CheckpointMismatch(_)
            | Error::Io(_) => EXIT_CONFIG,
            Error::MeanNotZero { .. }
            | Error::OriginSingularity { .. }
            | Error::CriticalPointCountMismatch { .. }
            | Error::OnSeparatrix { .. }
            | Error::StepRuleViolation { .. }
            | Error::PathsTooShort { .. }
            | Error::InsufficientHits { .. }
            | Error::DomainError(_) => EXIT_NUMERICAL,
        };
        Self { code, message: format!("{stage}: {e}") }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Attaches a stage name to library results.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> Result<T, Failure>;
}

impl<T> Stage<T> for stochavg_core::Result<T> {
    fn stage(self, stage: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::from_core(stage, e))
    }
}
