//! Knowledge graph of subject, relation, object facts.
//!
//! Construction runs in four steps: [`extract_triplets`] pulls candidate
//! facts out of a document, [`match_entity_candidates`] looks up close
//! knowledge-base entries, [`normalize_triplet`] lets a resolver adopt one
//! of them, and [`filter_novel`] drops facts the knowledge base already has.

mod extract;
mod index;
mod normalize;
mod novelty;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::text;

pub use extract::{build_extraction_prompt, extract_triplets, parse_triplet_lines, Extraction};
pub use index::{match_entity_candidates, Candidate, KbEntry, KbIndex, MAX_CANDIDATES};
pub use normalize::{
    build_resolver_prompt, normalize_triplet, NormalizationRecord, Normalizer, Slot, SlotCandidates, SlotDecision,
};
pub use novelty::{filter_novel, InMemoryKb, KnowledgeBase};
pub use snapshot::SNAPSHOT_FORMAT;

/// Internal document id (the private one; public ids live in revisions).
pub type DocId = u64;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("extraction backend failed for document {doc}: {source}")]
    Backend {
        doc: DocId,
        #[source]
        source: BackendError,
    },
    #[error("unparseable extraction output for document {doc}")]
    MalformedOutput { doc: DocId, raw: String },
    #[error("self-loop triplet rejected: {0}")]
    SelfLoop(String),
    #[error("inconsistent graph: {0}")]
    Inconsistent(String),
    #[error("invalid graph snapshot: {0}")]
    Snapshot(String),
}

impl KgError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, KgError::Backend { source, .. } if source.is_transient())
    }
}

/// Entity key: the normalized form, casefolded with whitespace collapsed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn from_form(form: &str) -> Self {
        Self(text::identity_key(form))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub surface_form: String,
    pub normalized_form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_match: Option<String>,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
}

impl Entity {
    pub fn new(surface_form: &str) -> Self {
        let normalized_form = text::collapse_whitespace(surface_form);
        let mut aliases = BTreeSet::new();
        if !surface_form.is_empty() {
            aliases.insert(surface_form.to_owned());
        }
        Self {
            id: EntityId::from_form(&normalized_form),
            surface_form: surface_form.to_owned(),
            normalized_form,
            kb_match: None,
            aliases,
        }
    }

    /// Replaces the normalized form with a knowledge-base candidate. The
    /// surface form is kept as an alias.
    pub fn adopt(&mut self, candidate: &Candidate) {
        self.normalized_form = candidate.label.clone();
        self.kb_match = Some(candidate.kb_id.clone());
        self.id = EntityId::from_form(&candidate.label);
        self.aliases.insert(self.surface_form.clone());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub label: String,
    pub normalized_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_match: Option<String>,
}

impl Relation {
    pub fn new(label: &str) -> Self {
        Self {
            label: label.to_owned(),
            normalized_label: text::collapse_whitespace(label),
            kb_match: None,
        }
    }

    /// Grouping key; relations compare by casefolded normalized label.
    pub fn key(&self) -> String {
        text::identity_key(&self.normalized_label)
    }

    pub fn adopt(&mut self, candidate: &Candidate) {
        self.normalized_label = candidate.label.clone();
        self.kb_match = Some(candidate.kb_id.clone());
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletFlags {
    /// The resolver failed, so the extracted forms were kept.
    #[serde(default)]
    pub unnormalized: bool,
    /// The knowledge-base lookup failed, so novelty is unknown.
    #[serde(default)]
    pub novelty_indeterminate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: Entity,
    pub relation: Relation,
    pub object: Entity,
    pub source_doc: DocId,
    #[serde(default)]
    pub novel: bool,
    #[serde(default)]
    pub flags: TripletFlags,
}

impl Triplet {
    pub fn new(subject: &str, relation: &str, object: &str, source_doc: DocId) -> Self {
        Self {
            subject: Entity::new(subject),
            relation: Relation::new(relation),
            object: Entity::new(object),
            source_doc,
            novel: false,
            flags: TripletFlags::default(),
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.subject.id == self.object.id
    }

    /// Identity of the fact irrespective of provenance.
    pub fn key(&self) -> (EntityId, String, EntityId) {
        (self.subject.id.clone(), self.relation.key(), self.object.id.clone())
    }

    /// `subject | relation | object` using normalized forms.
    pub fn render(&self) -> String {
        format!(
            "{} | {} | {}",
            self.subject.normalized_form, self.relation.normalized_label, self.object.normalized_form
        )
    }

    pub fn endpoints(&self) -> [&EntityId; 2] {
        [&self.subject.id, &self.object.id]
    }
}

/// Triplets plus an entity table and an entity → incident-triplet index.
///
/// A graph has a single writer; concurrent readers are fine while nobody
/// holds it mutably.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    entities: BTreeMap<EntityId, Entity>,
    triplets: Vec<Triplet>,
    adjacency: BTreeMap<EntityId, Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triplets(triplets: impl IntoIterator<Item = Triplet>) -> Result<Self, KgError> {
        let mut graph = Self::new();
        graph.merge(triplets)?;
        Ok(graph)
    }

    /// Adds a triplet. Returns `false` when an identical fact is already
    /// present; the first occurrence keeps its provenance and the entities
    /// pick up any new aliases.
    pub fn insert(&mut self, triplet: Triplet) -> Result<bool, KgError> {
        if triplet.is_self_loop() {
            return Err(KgError::SelfLoop(triplet.render()));
        }
        for entity in [&triplet.subject, &triplet.object] {
            self.entities
                .entry(entity.id.clone())
                .and_modify(|known| {
                    known.aliases.extend(entity.aliases.iter().cloned());
                    if known.kb_match.is_none() {
                        known.kb_match.clone_from(&entity.kb_match);
                    }
                })
                .or_insert_with(|| entity.clone());
        }
        let key = triplet.key();
        let duplicate = self
            .incident(&triplet.subject.id)
            .iter()
            .any(|&i| self.triplets[i].key() == key);
        if duplicate {
            return Ok(false);
        }
        let index = self.triplets.len();
        self.adjacency
            .entry(triplet.subject.id.clone())
            .or_default()
            .push(index);
        self.adjacency.entry(triplet.object.id.clone()).or_default().push(index);
        self.triplets.push(triplet);
        Ok(true)
    }

    /// Batched insert. Self-loops abort the batch; duplicates are skipped.
    /// Returns the number of triplets actually added.
    pub fn merge(&mut self, batch: impl IntoIterator<Item = Triplet>) -> Result<usize, KgError> {
        let mut added = 0;
        for triplet in batch {
            if self.insert(triplet)? {
                added += 1;
            }
        }
        Ok(added)
    }

    pub fn entities(&self) -> &BTreeMap<EntityId, Entity> {
        &self.entities
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn triplet(&self, index: usize) -> &Triplet {
        &self.triplets[index]
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Indices of triplets touching `id`, in insertion order.
    pub fn incident(&self, id: &EntityId) -> &[usize] {
        self.adjacency.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn adjacency(&self) -> &BTreeMap<EntityId, Vec<usize>> {
        &self.adjacency
    }

    pub fn rebuild_adjacency(&self) -> BTreeMap<EntityId, Vec<usize>> {
        let mut adjacency: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        for (index, triplet) in self.triplets.iter().enumerate() {
            for id in triplet.endpoints() {
                adjacency.entry(id.clone()).or_default().push(index);
            }
        }
        adjacency
    }

    pub fn check_consistency(&self) -> Result<(), KgError> {
        for triplet in &self.triplets {
            for id in triplet.endpoints() {
                if !self.entities.contains_key(id) {
                    return Err(KgError::Inconsistent(format!("unknown endpoint {id}")));
                }
            }
            if triplet.is_self_loop() {
                return Err(KgError::Inconsistent(format!("self-loop {}", triplet.render())));
            }
        }
        if self.rebuild_adjacency() != self.adjacency {
            return Err(KgError::Inconsistent("adjacency index out of sync".into()));
        }
        Ok(())
    }
}
