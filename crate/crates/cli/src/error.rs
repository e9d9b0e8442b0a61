use std::fmt::Display;

use multimix::corpus::CorpusError;
use multimix::em::EmError;
use multimix::mixture::MixtureError;
use multimix::selection::SelectionError;
use multimix::synth::SynthError;
use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Prefixes the message, keeping the class.
    pub fn context(self, ctx: impl Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{ctx}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{ctx}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{ctx}: {m}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub trait ResultExt<T> {
    fn context(self, ctx: impl Display) -> Result<T>;
}

impl<T, E: Into<CliError>> ResultExt<T> for std::result::Result<T, E> {
    fn context(self, ctx: impl Display) -> Result<T> {
        self.map_err(|e| e.into().context(ctx))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MixtureError> for CliError {
    fn from(e: MixtureError) -> Self {
        match e {
            MixtureError::InfiniteDivergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EmError> for CliError {
    fn from(e: EmError) -> Self {
        match e {
            EmError::Mixture(inner) => inner.into(),
            EmError::InfeasibleFloor { .. } | EmError::Config(_) => CliError::Usage(e.to_string()),
            EmError::InvalidWeights | EmError::NonFinite { .. } | EmError::Degenerate => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::DegenerateRegression | SelectionError::Domain(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Mixture(inner) => inner.into(),
            SynthError::Em(inner) => inner.into(),
            SynthError::Selection(inner) => inner.into(),
            SynthError::Corpus(inner) => inner.into(),
            SynthError::OracleInfeasible { .. } => CliError::Numerical(e.to_string()),
            SynthError::Invalid(_) | SynthError::Separation { .. } => CliError::Data(e.to_string()),
        }
    }
}
