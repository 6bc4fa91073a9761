use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read archive {path}: {reason}")]
    ArchiveUnreadable { path: PathBuf, reason: String },

    #[error("malformed project {path}: {reason}")]
    MalformedProject { path: PathBuf, reason: String },

    #[error("cannot read dataset directory {path}: {source}")]
    DatasetUnreadable { path: PathBuf, source: io::Error },

    #[error("no readable project in {0}")]
    DatasetEmpty(PathBuf),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot write {path}: {source}")]
    OutputUnwritable { path: PathBuf, source: io::Error },

    #[error("mutation not applicable: {0}")]
    Mutation(String),

    #[error("invalid corpus spec: {0}")]
    CorpusSpec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
