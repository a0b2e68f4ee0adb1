//! Participant side of the benchmark: the baseline RAG pipeline (chunking,
//! dense retrieval, prompting, generation), result packaging, local
//! scoring against sandbox revisions and HTTP backends.

pub mod baseline;
pub mod chunk;
pub mod config;
pub mod http;
pub mod local;
pub mod prompt;
pub mod retrieval;

use ragbench_core::backend::BackendError;
use thiserror::Error;

pub use baseline::{run_baseline, BaselineConfig, BaselineRun};
pub use chunk::{chunk_documents, chunk_text, Chunk, CHUNK_LEN, CHUNK_OVERLAP, CHUNK_STRIDE};
pub use local::{local_evaluate, LocalReport};
pub use prompt::{build_answer_prompt, PromptSpec};
pub use retrieval::{build_index, retrieve_top_k, Retrieved, VectorIndex};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("embedding chunk {start}..{end} of document {doc} failed: {source}")]
    Embedding {
        doc: u64,
        start: usize,
        end: usize,
        #[source]
        source: BackendError,
    },
    #[error("invalid prompt spec: {0}")]
    PromptSpec(String),
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("service request failed: {0}")]
    Service(#[from] ureq::Error),
}
