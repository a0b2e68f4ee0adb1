use std::collections::HashSet;

use super::{DocId, KgError, Triplet};
use crate::backend::{RetryPolicy, TextBackend};
use crate::text;

/// Result of one extraction call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub triplets: Vec<Triplet>,
    /// Lines that were not `subject | relation | object`.
    pub skipped_lines: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

pub fn build_extraction_prompt(text: &str) -> String {
    format!(
        "Extract factual triplets from the text below.\n\
         Write one triplet per line in the form: subject | relation | object\n\
         Use names exactly as they appear in the text. Write nothing else.\n\
         \n\
         Text:\n{text}\n\
         \n\
         Triplets:\n"
    )
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    if let Some(rest) = line.strip_prefix(['-', '*', '•']) {
        return rest.trim_start();
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix(['.', ')']) {
            return rest.trim_start();
        }
    }
    line
}

/// Parses `subject | relation | object` lines. Blank lines are ignored;
/// anything else that does not split into three non-empty parts is counted
/// as skipped. Optional list markers and wrapping parentheses are accepted.
pub fn parse_triplet_lines(raw: &str) -> (Vec<(String, String, String)>, usize) {
    let mut parsed = Vec::new();
    let mut skipped = 0;
    for line in raw.lines() {
        let mut line = strip_list_marker(line);
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('(').and_then(|l| l.strip_suffix(')')) {
            line = inner;
        }
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        match parts.as_slice() {
            [s, r, o] if !s.is_empty() && !r.is_empty() && !o.is_empty() => {
                parsed.push(((*s).to_owned(), (*r).to_owned(), (*o).to_owned()));
            }
            _ => skipped += 1,
        }
    }
    (parsed, skipped)
}

/// Extracts triplets from one document.
///
/// Self-loops are dropped and facts identical after whitespace
/// normalization are collapsed. An empty document yields nothing without a
/// backend call. Output with content but no parseable line is an error
/// carrying the raw payload.
pub fn extract_triplets(
    doc: DocId,
    text: &str,
    extractor: &dyn TextBackend,
    retry: RetryPolicy,
) -> Result<Extraction, KgError> {
    if text.trim().is_empty() {
        return Ok(Extraction::default());
    }
    let prompt = build_extraction_prompt(text);
    let raw = retry
        .run(|| extractor.complete(&prompt))
        .map_err(|source| KgError::Backend { doc, source })?;

    let (parsed, skipped_lines) = parse_triplet_lines(&raw);
    if parsed.is_empty() && skipped_lines > 0 {
        return Err(KgError::MalformedOutput { doc, raw });
    }

    let mut extraction = Extraction {
        skipped_lines,
        ..Extraction::default()
    };
    let mut seen = HashSet::new();
    for (s, r, o) in parsed {
        let key = (
            text::collapse_whitespace(&s),
            text::collapse_whitespace(&r),
            text::collapse_whitespace(&o),
        );
        let triplet = Triplet::new(&s, &r, &o, doc);
        if triplet.is_self_loop() {
            extraction.self_loops += 1;
        } else if !seen.insert(key) {
            extraction.duplicates += 1;
        } else {
            extraction.triplets.push(triplet);
        }
    }
    Ok(extraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, FnBackend, ScriptedBackend};

    const DUBBING: &str = "The Japanese dub of the series is announced. \
        Keisuke Chiba will voice Morty Smith.";

    #[test]
    fn extracts_dubbing_fact() {
        let backend = ScriptedBackend::constant("Morty Smith | voice | Keisuke Chiba");
        let out = extract_triplets(4, DUBBING, &backend, RetryPolicy::immediate()).unwrap();
        assert_eq!(out.triplets.len(), 1);
        let t = &out.triplets[0];
        assert_eq!(t.subject.surface_form, "Morty Smith");
        assert_eq!(t.relation.label, "voice");
        assert_eq!(t.object.surface_form, "Keisuke Chiba");
        assert_eq!(t.source_doc, 4);
    }

    #[test]
    fn empty_document_skips_backend() {
        let backend = ScriptedBackend::new();
        let out = extract_triplets(1, "   \n", &backend, RetryPolicy::immediate()).unwrap();
        assert!(out.triplets.is_empty());
        assert!(backend.prompts().is_empty());
    }

    #[test]
    fn duplicate_lines_collapse() {
        let backend =
            ScriptedBackend::constant("Morty Smith | voice | Keisuke Chiba\nMorty  Smith |  voice | Keisuke Chiba ");
        let out = extract_triplets(1, DUBBING, &backend, RetryPolicy::immediate()).unwrap();
        assert_eq!(out.triplets.len(), 1);
        assert_eq!(out.duplicates, 1);
    }

    #[test]
    fn malformed_lines_are_skipped_and_counted() {
        let backend =
            ScriptedBackend::constant("1. (Morty Smith | voice | Keisuke Chiba)\nnot a triplet\nA | B\n- X | is | X");
        let out = extract_triplets(1, DUBBING, &backend, RetryPolicy::immediate()).unwrap();
        assert_eq!(out.triplets.len(), 1);
        assert_eq!(out.skipped_lines, 2);
        assert_eq!(out.self_loops, 1);
    }

    #[test]
    fn wholly_malformed_output_carries_payload() {
        let backend = ScriptedBackend::constant("I could not find any facts.");
        let err = extract_triplets(9, DUBBING, &backend, RetryPolicy::immediate()).unwrap_err();
        match err {
            KgError::MalformedOutput { doc, raw } => {
                assert_eq!(doc, 9);
                assert_eq!(raw, "I could not find any facts.");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn backend_failure_is_retryable() {
        let backend =
            FnBackend(|_: &str| -> Result<String, BackendError> { Err(BackendError::Transient("503".into())) });
        let err = extract_triplets(1, DUBBING, &backend, RetryPolicy::immediate()).unwrap_err();
        assert!(err.is_retryable());
    }

    #[test]
    fn deterministic_backend_gives_deterministic_output() {
        let backend = ScriptedBackend::constant("A | r | B\nB | r | C");
        let a = extract_triplets(1, "A B C", &backend, RetryPolicy::immediate()).unwrap();
        let b = extract_triplets(1, "A B C", &backend, RetryPolicy::immediate()).unwrap();
        assert_eq!(a, b);
    }
}
