use std::fmt;
use std::path::Path;

use crossdisp_core::io::IoError;
use crossdisp_core::{PanelError, SimError, TailError, TheoryError};

/// Process exit codes.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &Path) -> Self {
        let tag = |m: String| format!("{}: {m}", path.display());
        match self {
            Self::Usage(m) => Self::Usage(tag(m)),
            Self::Data(m) => Self::Data(tag(m)),
            Self::Numerical(m) => Self::Numerical(tag(m)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            // Io errors already name their path.
            IoError::Panel(p) => p.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<TailError> for CliError {
    fn from(e: TailError) -> Self {
        match e {
            TailError::InvalidWindow | TailError::BadK { .. } => Self::Usage(e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NotPsd { .. } => Self::Numerical(format!(
                "{e}; pass --analytic-only to print the closed-form value instead"
            )),
            SimError::Theory(t) => t.into(),
            SimError::ZeroReps | SimError::TooSmall(_) => Self::Usage(e.to_string()),
        }
    }
}
