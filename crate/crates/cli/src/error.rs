use std::fmt;
use std::path::Path;

use polyprop_core::Error;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or model parameters.
    Validation(String),
    /// A library error, with the operation it came from.
    Core { context: String, error: Error },
    /// Checks that ran but failed; `fit` when any of them is a fitted exponent.
    Checks { failed: Vec<String>, fit: bool },
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core { error, .. } => match error {
                Error::ThresholdAmbiguous { .. } => 3,
                Error::FitIllConditioned(_) => 4,
                Error::EvenDimension(_)
                | Error::DimensionOutOfRange { .. }
                | Error::NonPositiveOrder(_)
                | Error::KindOutOfRange { .. }
                | Error::ZeroTime
                | Error::CoincidenceSingularity(_)
                | Error::OrderTooLarge { .. }
                | Error::MixedRegime { .. }
                | Error::GridTooCoarse(_)
                | Error::PhaseUnderResolved(_)
                | Error::UnsupportedIndex(_)
                | Error::BackendUnsupported(_)
                | Error::EmptyIndexRange(_)
                | Error::InvalidInput(_) => 2,
                _ => 1,
            },
            CliError::Checks { fit: true, .. } => 4,
            CliError::Checks { .. } => 1,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Core { context, error } => write!(f, "{context}: {error}"),
            CliError::Checks { failed, .. } => write!(f, "checks failed: {}", failed.join(", ")),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

/// Attaches the operation name to library errors.
pub trait Context<T> {
    fn ctx(self, context: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for polyprop_core::Result<T> {
    fn ctx(self, context: &str) -> Result<T, CliError> {
        self.map_err(|error| CliError::Core {
            context: context.to_string(),
            error,
        })
    }
}
