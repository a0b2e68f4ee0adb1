//! Corpus ingestion, dataset revisions and their on-disk store.

mod ingest;
mod revision;
mod store;
mod version;

use std::path::PathBuf;

use thiserror::Error;

pub use ingest::{
    assign_public_ids, content_hash, default_cleaner, diff_corpus, ingest_documents, DocumentRecord, IngestReport,
    RawDocument,
};
pub use revision::{
    build_revision, DatasetRevision, MappingEntry, PrivateQa, PublicQuestion, PublicSplits, PublicText,
};
pub use store::{DatasetStore, ManifestEntry, ROOT_ENV};
pub use version::{bump_version, Version};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate internal id {0}")]
    DuplicateInternalId(u64),
    #[error("question {question} cites document {doc}, which is not in the revision")]
    DanglingSource { question: u64, doc: u64 },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid version {0:?}")]
    BadVersion(String),
    #[error("revision invariant violated: {0}")]
    Invariant(String),
    #[error("revision {0} already exists")]
    RevisionExists(Version),
    #[error("no revision {0}")]
    UnknownRevision(String),
    #[error("malformed split file {path}: {reason}")]
    Split { path: PathBuf, reason: String },
    #[error("storage root not configured; set {0}")]
    NoRoot(&'static str),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| DatasetError::Io { path, source }
    }
}
