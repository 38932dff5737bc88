use std::fmt;
use std::io;
use std::path::Path;

use dpens::accounting::AccountingError;
use dpens::data::DataError;
use dpens::ensemble::EnsembleError;
use dpens::eval::EvalError;

/// Process exit codes, in the sysexits bands where one applies.
pub mod exit {
    pub const OK: u8 = 0;
    pub const PRIVACY: u8 = 2;
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const NO_INPUT: u8 = 66;
    pub const IO: u8 = 74;
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(exit::DATA, message)
    }

    pub fn privacy(message: impl Into<String>) -> Self {
        Self::new(exit::PRIVACY, message)
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        let code = if e.kind() == io::ErrorKind::NotFound { exit::NO_INPUT } else { exit::IO };
        Self::new(code, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn accounting_code(e: &AccountingError) -> u8 {
    match e {
        AccountingError::DeltaOverflow(_)
        | AccountingError::BudgetExceeded { .. }
        | AccountingError::NotExhausted { .. }
        | AccountingError::NotPrivate(_) => exit::PRIVACY,
        _ => exit::DATA,
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        Self::new(accounting_code(&e), e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match &e {
            DataError::Budget(b) => accounting_code(b),
            _ => exit::DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        let code = match &e {
            EnsembleError::Accounting(b) => accounting_code(b),
            _ => exit::DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DatasetNotFound(_) => Self::new(exit::NO_INPUT, e.to_string()),
            EvalError::Io { ref path, .. } => {
                let code = if path.exists() { exit::IO } else { exit::NO_INPUT };
                Self::new(code, e.to_string())
            }
            EvalError::Data(d) => d.into(),
            EvalError::Ensemble(d) => d.into(),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}
