use std::fmt;
use std::path::PathBuf;

/// Problem with one configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: &str) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<FieldError>),
    #[error("archive: {0}")]
    Archive(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] pronk_core::Error),
    #[error("replay differs from the archive in {}", .0.join(", "))]
    ReplayMismatch(Vec<String>),
    #[error("{0}")]
    Internal(String),
}

fn list(errs: &[FieldError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl HarnessError {
    pub fn parse(msg: &str) -> Self {
        HarnessError::Parse(msg.trim().to_string())
    }

    /// Process exit code: 2 for anything wrong with the inputs, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ReadConfig { .. }
            | HarnessError::Parse(_)
            | HarnessError::Invalid(_)
            | HarnessError::Archive(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
