use ragbench_core::dataset::PublicText;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const CHUNK_LEN: usize = 500;
pub const CHUNK_OVERLAP: usize = 100;
pub const CHUNK_STRIDE: usize = CHUNK_LEN - CHUNK_OVERLAP;

/// A character span `[start, end)` of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_public_id: u64,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Character spans of a text of `len` characters: windows of
/// [`CHUNK_LEN`] every [`CHUNK_STRIDE`], the last one cut at the end.
pub fn chunk_spans(len: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + CHUNK_LEN).min(len);
        spans.push((start, end));
        if end == len {
            break;
        }
        start += CHUNK_STRIDE;
    }
    spans
}

pub fn chunk_text(doc_public_id: u64, text: &str) -> Vec<Chunk> {
    let chars: Vec<char> = text.chars().collect();
    chunk_spans(chars.len())
        .into_iter()
        .map(|(start, end)| Chunk {
            doc_public_id,
            start,
            end,
            text: chars[start..end].iter().collect(),
        })
        .collect()
}

/// Chunks every document, in document order.
pub fn chunk_documents(docs: &[PublicText]) -> Vec<Chunk> {
    docs.par_iter()
        .map(|d| chunk_text(d.public_id, &d.text))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
