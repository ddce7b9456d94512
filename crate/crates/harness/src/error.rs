use std::fmt;

/// Harness failures, each mapped to a process exit code.
#[derive(Debug)]
pub enum HarnessError {
    /// Bad command line or configuration (exit 1).
    Config(String),
    /// I/O, data or numeric failure while running (exit 2).
    Runtime(anyhow::Error),
    /// A sweep finished but some cells failed (exit 3).
    PartialSweep { failed: usize, total: usize },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Runtime(_) => 2,
            HarnessError::PartialSweep { .. } => 3,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(m) => write!(f, "configuration error: {m}"),
            HarnessError::Runtime(e) => write!(f, "{e:#}"),
            HarnessError::PartialSweep { failed, total } => {
                write!(f, "{failed} of {total} sweep cells failed")
            }
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<anyhow::Error> for HarnessError {
    fn from(e: anyhow::Error) -> Self {
        HarnessError::Runtime(e)
    }
}

impl From<unrank_core::Error> for HarnessError {
    fn from(e: unrank_core::Error) -> Self {
        match e {
            unrank_core::Error::Config(m) => HarnessError::Config(m),
            other => HarnessError::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.into())
    }
}

pub type HResult<T> = Result<T, HarnessError>;
