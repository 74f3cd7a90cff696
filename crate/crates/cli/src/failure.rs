use std::fmt;

use mickey_core::Error;

/// Why a command failed, which fixes its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input records.
    Usage(String),
    /// I/O, backend, provider or locking trouble.
    Infrastructure(String),
    Core(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Infrastructure(_) => 2,
            Failure::Core(e) => match e {
                Error::Parse { .. }
                | Error::Validation { .. }
                | Error::Degenerate(_)
                | Error::Lookup(_)
                | Error::Config(_)
                | Error::Protocol(_) => 1,
                Error::Io { .. } | Error::Backend(_) | Error::Provider(_) | Error::Journal { .. } => 2,
                Error::Diverged { .. } => 3,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Infrastructure(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}
