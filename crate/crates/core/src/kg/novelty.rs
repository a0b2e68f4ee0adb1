use std::collections::HashSet;

use super::Triplet;
use crate::backend::BackendError;

/// Membership oracle over (entity, property, entity) knowledge-base ids.
pub trait KnowledgeBase: Send + Sync {
    fn contains(&self, subject: &str, property: &str, object: &str) -> Result<bool, BackendError>;
}

#[derive(Debug, Clone, Default)]
pub struct InMemoryKb {
    triples: HashSet<(String, String, String)>,
}

impl InMemoryKb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, subject: &str, property: &str, object: &str) -> Self {
        self.triples
            .insert((subject.to_owned(), property.to_owned(), object.to_owned()));
        self
    }
}

impl KnowledgeBase for InMemoryKb {
    fn contains(&self, subject: &str, property: &str, object: &str) -> Result<bool, BackendError> {
        Ok(self
            .triples
            .contains(&(subject.to_owned(), property.to_owned(), object.to_owned())))
    }
}

/// Drops triplets the knowledge base already states.
///
/// A triplet is discarded only when all three slots carry a `kb_match` and
/// the knowledge base contains exactly that triple. Lookup failures keep the
/// triplet with `flags.novelty_indeterminate` set. Survivors are marked
/// `novel`.
pub fn filter_novel(triplets: Vec<Triplet>, kb: &dyn KnowledgeBase) -> Vec<Triplet> {
    triplets
        .into_iter()
        .filter_map(|mut t| {
            let ids = (
                t.subject.kb_match.as_deref(),
                t.relation.kb_match.as_deref(),
                t.object.kb_match.as_deref(),
            );
            if let (Some(s), Some(p), Some(o)) = ids {
                match kb.contains(s, p, o) {
                    Ok(true) => return None,
                    Ok(false) => t.flags.novelty_indeterminate = false,
                    Err(err) => {
                        log::warn!("knowledge-base lookup failed for {}: {err}", t.render());
                        t.flags.novelty_indeterminate = true;
                    }
                }
            }
            t.novel = true;
            Some(t)
        })
        .collect()
}
