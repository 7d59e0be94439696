use std::path::Path;

/// Everything the pipeline can fail with. Each variant has a stable code
/// printed by the command line and a process exit status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Net(String),
    #[error("checksum mismatch for {path}: expected {expected}, got {actual}; moved to {quarantine}")]
    Checksum {
        path: String,
        expected: String,
        actual: String,
        quarantine: String,
    },
    #[error("unknown manifest {name:?}; available: {}", available.join(", "))]
    Manifest { name: String, available: Vec<String> },
    #[error("{0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Input(_) => "E_INPUT",
            Error::Data(_) => "E_DATA",
            Error::Net(_) => "E_NET",
            Error::Checksum { .. } => "E_CHECKSUM",
            Error::Manifest { .. } => "E_MANIFEST",
            Error::Internal(_) => "E_INTERNAL",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 1,
            Error::Input(_) | Error::Manifest { .. } => 2,
            Error::Data(_) | Error::Checksum { .. } => 3,
            Error::Net(_) => 4,
        }
    }

    /// `error[CODE]: message` on a single line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }

    pub(crate) fn input(path: &Path, what: impl std::fmt::Display) -> Self {
        Error::Input(format!("{}: {what}", path.display()))
    }

    pub(crate) fn data(path: &Path, what: impl std::fmt::Display) -> Self {
        Error::Data(format!("{}: {what}", path.display()))
    }
}
