use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::Entity;
use crate::backend::{BackendError, Embedder, RetryPolicy, Similarity};

/// How many candidates the resolver gets to see per slot.
pub const MAX_CANDIDATES: usize = 5;

/// One knowledge-base item (entity or property).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub kb_id: String,
    pub label: String,
}

impl KbEntry {
    pub fn new(kb_id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            kb_id: kb_id.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kb_id: String,
    pub label: String,
    pub score: f64,
}

/// Vector index over knowledge-base labels, compared by cosine similarity.
#[derive(Debug, Clone, Default)]
pub struct KbIndex {
    entries: Vec<(KbEntry, Vec<f32>)>,
}

impl KbIndex {
    pub fn build(
        entries: impl IntoIterator<Item = KbEntry>,
        embedder: &dyn Embedder,
        retry: RetryPolicy,
    ) -> Result<Self, BackendError> {
        let entries = entries
            .into_iter()
            .map(|entry| {
                let vector = retry.run(|| embedder.embed(&entry.label))?;
                Ok((entry, vector))
            })
            .collect::<Result<_, BackendError>>()?;
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, kb_id: &str) -> bool {
        self.entries.iter().any(|(e, _)| e.kb_id == kb_id)
    }

    /// Up to `limit` entries by descending similarity to `query`; ties go to
    /// the lexicographically smaller id.
    pub fn candidates(
        &self,
        query: &str,
        embedder: &dyn Embedder,
        limit: usize,
    ) -> Result<Vec<Candidate>, BackendError> {
        if self.entries.is_empty() || limit == 0 {
            return Ok(Vec::new());
        }
        let query = embedder.embed(query)?;
        let mut scored: Vec<Candidate> = self
            .entries
            .iter()
            .map(|(entry, vector)| Candidate {
                kb_id: entry.kb_id.clone(),
                label: entry.label.clone(),
                score: Similarity::Cosine.score(&query, vector),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.kb_id.cmp(&b.kb_id))
        });
        scored.truncate(limit);
        Ok(scored)
    }
}

/// The closest [`MAX_CANDIDATES`] entries for an extracted entity.
pub fn match_entity_candidates(
    entity: &Entity,
    index: &KbIndex,
    embedder: &dyn Embedder,
) -> Result<Vec<Candidate>, BackendError> {
    index.candidates(&entity.surface_form, embedder, MAX_CANDIDATES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::HashEmbedder;

    fn index(labels: &[(&str, &str)], embedder: &dyn Embedder) -> KbIndex {
        KbIndex::build(
            labels.iter().map(|(id, l)| KbEntry::new(*id, *l)),
            embedder,
            RetryPolicy::immediate(),
        )
        .unwrap()
    }

    #[test]
    fn verbatim_entry_ranks_first() {
        let embedder = HashEmbedder::default();
        let idx = index(
            &[
                ("Q1", "Keisuke Chiba"),
                ("Q2", "Morty Smith"),
                ("Q3", "Rick Sanchez"),
                ("Q4", "Chiba Prefecture"),
            ],
            &embedder,
        );
        let found = match_entity_candidates(&Entity::new("Keisuke Chiba"), &idx, &embedder).unwrap();
        assert_eq!(found[0].kb_id, "Q1");
        assert!((found[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn never_more_than_index_size_or_five() {
        let embedder = HashEmbedder::default();
        let small = index(&[("Q1", "a"), ("Q2", "b"), ("Q3", "c")], &embedder);
        assert!(
            match_entity_candidates(&Entity::new("a"), &small, &embedder)
                .unwrap()
                .len()
                <= 3
        );
        let labels: Vec<(String, String)> = (0..9).map(|i| (format!("Q{i}"), format!("label {i}"))).collect();
        let big = KbIndex::build(
            labels.iter().map(|(id, l)| KbEntry::new(id.clone(), l.clone())),
            &embedder,
            RetryPolicy::immediate(),
        )
        .unwrap();
        assert_eq!(
            match_entity_candidates(&Entity::new("label"), &big, &embedder)
                .unwrap()
                .len(),
            5
        );
    }

    #[test]
    fn empty_index_is_not_an_error() {
        let embedder = HashEmbedder::default();
        let empty = KbIndex::default();
        assert!(match_entity_candidates(&Entity::new("x"), &empty, &embedder)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn order_matches_brute_force_ranking() {
        let embedder = HashEmbedder::new(64);
        let labels = [
            ("Q7", "red fox"),
            ("Q2", "red fox den"),
            ("Q9", "fox"),
            ("Q1", "blue whale"),
            ("Q5", "red panda"),
            ("Q3", "arctic fox red"),
            ("Q4", "fox red"),
        ];
        let idx = index(&labels, &embedder);
        let got: Vec<String> = idx
            .candidates("red fox", &embedder, 5)
            .unwrap()
            .into_iter()
            .map(|c| c.kb_id)
            .collect();

        // Oracle: shared-token count over unit-normalized bags of words,
        // sorted independently.
        let tokens = |s: &str| s.split(' ').map(str::to_owned).collect::<Vec<_>>();
        let q = tokens("red fox");
        let mut brute: Vec<(f64, &str)> = labels
            .iter()
            .map(|(id, l)| {
                let t = tokens(l);
                let shared = t.iter().filter(|x| q.contains(x)).count() as f64;
                (shared / ((t.len() as f64).sqrt() * (q.len() as f64).sqrt()), *id)
            })
            .collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let expected: Vec<&str> = brute.iter().take(5).map(|(_, id)| *id).collect();
        assert_eq!(got, expected);
    }
}
