use std::fmt;

use ssrl_core::axes::AxesError;
use ssrl_core::eval::EvalError;
use ssrl_core::gan::GanError;
use ssrl_core::screen::ScreenError;
use ssrl_core::svm::{MetricsError, SvmError};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// A failed command. Validation covers bad configs and malformed inputs;
/// runtime covers I/O and numerical failures.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Validation(m) => ("validation", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        // One line, whatever the source message looks like.
        write!(f, "{kind}: {}", msg.replace(['\n', '\r'], " "))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::NonFinite { .. } | GanError::Io { .. } | GanError::Autograd(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ScreenError> for CliError {
    fn from(e: ScreenError) -> Self {
        match e {
            ScreenError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SvmError> for CliError {
    fn from(e: SvmError) -> Self {
        match e {
            SvmError::NonFinite(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AxesError> for CliError {
    fn from(e: AxesError) -> Self {
        match e {
            AxesError::Svm(s) => s.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Svm(s) => s.into(),
            EvalError::Metrics(m) => m.into(),
            EvalError::Gan(g) => g.into(),
            EvalError::Screen(s) => s.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}
