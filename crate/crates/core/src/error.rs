use std::path::PathBuf;

use crate::dialogue::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Remote call failed after exhausting the retry budget.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("backend returned an empty completion")]
    EmptyResponse,

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("stage `{stage}` requires `{missing}` to be completed first")]
    Prerequisite { stage: String, missing: String },

    #[error("stage `{stage}` output {path} no longer matches its recorded checksum")]
    StaleOutput { stage: String, path: PathBuf },

    #[error("config hash {current} differs from the run manifest ({recorded}); pass --force to continue")]
    ConfigMismatch { recorded: String, current: String },

    #[error("work directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("invalid config: {0}")]
    Config(String),

    /// A stage stopped early on cancellation; rerunning it resumes.
    #[error("stage `{0}` was interrupted; rerun it to resume")]
    Interrupted(String),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
