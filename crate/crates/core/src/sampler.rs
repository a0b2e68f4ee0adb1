//! Exhaustive enumeration of the four question templates over a graph.
//!
//! * **Simple**: one triplet; the subject goes into the question and the
//!   object is the answer.
//! * **Set**: all triplets sharing one relation and one endpoint on the same
//!   side (a maximal fan-out of at least two). The shared entity goes into
//!   the question, every other endpoint is part of the answer.
//! * **MultiHop**: two triplets meeting at exactly one entity, the bridge,
//!   which must stay hidden. Of the two remaining endpoints, the one on the
//!   first triplet (in subgraph order) is the answer and the other is
//!   mentioned in the question.
//! * **Conditional**: the same pair shape, but the meeting entity is the
//!   answer and both remaining endpoints are mentioned in the question.
//!
//! Triplets inside a subgraph are ordered by (relation, object id, subject
//! id) and subgraphs are ordered by their triplet keys, so output is stable
//! for a given graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, KnowledgeGraph, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Simple,
    Set,
    MultiHop,
    Conditional,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Simple,
        QuestionType::Set,
        QuestionType::MultiHop,
        QuestionType::Conditional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::Simple => "simple",
            QuestionType::Set => "set",
            QuestionType::MultiHop => "multi_hop",
            QuestionType::Conditional => "conditional",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QuestionType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown question type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    QuestionSlot,
    AnswerSlot,
    Shared,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subgraph {
    pub qtype: QuestionType,
    /// Indices into the source graph's triplet list.
    pub triplets: Vec<usize>,
    pub roles: BTreeMap<EntityId, Role>,
}

impl Subgraph {
    pub fn entities_with(&self, role: Role) -> impl Iterator<Item = &EntityId> {
        self.roles.iter().filter(move |(_, r)| **r == role).map(|(id, _)| id)
    }

    /// Entities in order of first appearance across the subgraph's triplets.
    pub fn entities_in_order<'g>(&self, graph: &'g KnowledgeGraph) -> Vec<&'g EntityId> {
        let mut seen = Vec::new();
        for &i in &self.triplets {
            for id in graph.triplet(i).endpoints() {
                if !seen.contains(&id) {
                    seen.push(id);
                }
            }
        }
        seen
    }

    /// Answer entities in subgraph order. For Conditional this is the shared
    /// entity, for the other templates the `AnswerSlot` entities.
    pub fn answer_entities<'g>(&self, graph: &'g KnowledgeGraph) -> Vec<&'g EntityId> {
        self.entities_in_order(graph)
            .into_iter()
            .filter(|id| self.roles.get(*id) == Some(&Role::AnswerSlot))
            .collect()
    }

    /// Checks the template invariant of `qtype` against `graph`.
    pub fn check(&self, graph: &KnowledgeGraph) -> Result<(), String> {
        if self.triplets.iter().any(|&i| i >= graph.len()) {
            return Err("triplet index out of range".into());
        }
        let ts: Vec<&Triplet> = self.triplets.iter().map(|&i| graph.triplet(i)).collect();
        let endpoints: BTreeSet<&EntityId> = ts.iter().flat_map(|t| t.endpoints()).collect();
        if endpoints.len() != self.roles.len() || endpoints.iter().any(|e| !self.roles.contains_key(*e)) {
            return Err("roles do not cover exactly the subgraph entities".into());
        }
        let count = |role| self.entities_with(role).count();
        match self.qtype {
            QuestionType::Simple => {
                if ts.len() != 1 {
                    return Err("simple needs exactly one triplet".into());
                }
                if count(Role::QuestionSlot) != 1 || count(Role::AnswerSlot) != 1 {
                    return Err("simple needs one question and one answer entity".into());
                }
            }
            QuestionType::Set => {
                if ts.len() < 2 {
                    return Err("set needs at least two triplets".into());
                }
                if ts.iter().any(|t| t.relation.key() != ts[0].relation.key()) {
                    return Err("set triplets must share the relation".into());
                }
                let shared: Vec<&EntityId> = self.entities_with(Role::Shared).collect();
                let [shared] = shared.as_slice() else {
                    return Err("set needs exactly one shared entity".into());
                };
                let by_subject = ts.iter().all(|t| &t.subject.id == *shared);
                let by_object = ts.iter().all(|t| &t.object.id == *shared);
                if !by_subject && !by_object {
                    return Err("shared entity must sit on the same side of every triplet".into());
                }
                if count(Role::AnswerSlot) != ts.len() {
                    return Err("every non-shared endpoint must be an answer".into());
                }
            }
            QuestionType::MultiHop | QuestionType::Conditional => {
                let [a, b] = ts.as_slice() else {
                    return Err("pair templates need exactly two triplets".into());
                };
                let left: BTreeSet<_> = a.endpoints().into_iter().collect();
                let right: BTreeSet<_> = b.endpoints().into_iter().collect();
                let meet: Vec<_> = left.intersection(&right).collect();
                let [meet] = meet.as_slice() else {
                    return Err("pair triplets must meet at exactly one entity".into());
                };
                let (meet_role, answers, questions) = if self.qtype == QuestionType::MultiHop {
                    (Role::Bridge, 1, 1)
                } else {
                    (Role::AnswerSlot, 1, 2)
                };
                if self.roles.get(**meet) != Some(&meet_role) {
                    return Err("meeting entity has the wrong role".into());
                }
                if count(Role::AnswerSlot) != answers || count(Role::QuestionSlot) != questions {
                    return Err("pair template role counts are wrong".into());
                }
            }
        }
        Ok(())
    }
}

/// Caps on enumeration. Set groups larger than `max_set_fanout` are skipped
/// (a truncated group would give an incomplete answer); `max_results` keeps
/// a prefix of the ordered output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationLimits {
    pub max_set_fanout: usize,
    pub max_results: Option<usize>,
}

impl EnumerationLimits {
    pub fn unbounded() -> Self {
        Self {
            max_set_fanout: usize::MAX,
            max_results: None,
        }
    }
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_set_fanout: 10,
            max_results: None,
        }
    }
}

type TripletKey = (String, EntityId, EntityId);

fn sort_key(graph: &KnowledgeGraph, index: usize) -> TripletKey {
    let t = graph.triplet(index);
    (t.relation.key(), t.object.id.clone(), t.subject.id.clone())
}

fn order_triplets(graph: &KnowledgeGraph, triplets: &mut [usize]) {
    triplets.sort_by_cached_key(|&i| sort_key(graph, i));
}

fn other_end<'g>(t: &'g Triplet, id: &EntityId) -> &'g EntityId {
    if &t.subject.id == id {
        &t.object.id
    } else {
        &t.subject.id
    }
}

fn simple(graph: &KnowledgeGraph) -> Vec<Subgraph> {
    graph
        .triplets()
        .iter()
        .enumerate()
        .map(|(i, t)| Subgraph {
            qtype: QuestionType::Simple,
            triplets: vec![i],
            roles: BTreeMap::from([
                (t.subject.id.clone(), Role::QuestionSlot),
                (t.object.id.clone(), Role::AnswerSlot),
            ]),
        })
        .collect()
}

fn sets(graph: &KnowledgeGraph, max_fanout: usize) -> Vec<Subgraph> {
    // (shared entity, relation, shared on subject side) -> triplets
    let mut groups: BTreeMap<(EntityId, String, bool), Vec<usize>> = BTreeMap::new();
    for (i, t) in graph.triplets().iter().enumerate() {
        let rel = t.relation.key();
        groups
            .entry((t.subject.id.clone(), rel.clone(), true))
            .or_default()
            .push(i);
        groups.entry((t.object.id.clone(), rel, false)).or_default().push(i);
    }
    groups
        .into_iter()
        .filter(|(_, members)| members.len() >= 2 && members.len() <= max_fanout)
        .map(|((shared, _, _), mut members)| {
            order_triplets(graph, &mut members);
            let mut roles = BTreeMap::new();
            for &i in &members {
                roles.insert(other_end(graph.triplet(i), &shared).clone(), Role::AnswerSlot);
            }
            roles.insert(shared, Role::Shared);
            Subgraph {
                qtype: QuestionType::Set,
                triplets: members,
                roles,
            }
        })
        .collect()
}

/// Pairs of triplets meeting at exactly one entity, with that entity.
fn meeting_pairs(graph: &KnowledgeGraph) -> Vec<([usize; 2], EntityId)> {
    let anchors: Vec<&EntityId> = graph.adjacency().keys().collect();
    anchors
        .par_iter()
        .flat_map_iter(|&anchor| {
            let incident = graph.incident(anchor);
            let mut pairs = Vec::new();
            for (n, &a) in incident.iter().enumerate() {
                for &b in &incident[n + 1..] {
                    let (ta, tb) = (graph.triplet(a), graph.triplet(b));
                    // Both endpoints shared means the pair meets twice.
                    if other_end(ta, anchor) != other_end(tb, anchor) {
                        let mut pair = [a, b];
                        order_triplets(graph, &mut pair);
                        pairs.push((pair, anchor.clone()));
                    }
                }
            }
            pairs
        })
        .collect()
}

fn pair_subgraph(graph: &KnowledgeGraph, qtype: QuestionType, pair: [usize; 2], meet: EntityId) -> Subgraph {
    let first = other_end(graph.triplet(pair[0]), &meet).clone();
    let second = other_end(graph.triplet(pair[1]), &meet).clone();
    let roles = if qtype == QuestionType::MultiHop {
        BTreeMap::from([
            (meet, Role::Bridge),
            (first, Role::AnswerSlot),
            (second, Role::QuestionSlot),
        ])
    } else {
        BTreeMap::from([
            (meet, Role::AnswerSlot),
            (first, Role::QuestionSlot),
            (second, Role::QuestionSlot),
        ])
    };
    Subgraph {
        qtype,
        triplets: pair.to_vec(),
        roles,
    }
}

/// All subgraphs of `graph` matching the `qtype` template, up to `limits`.
pub fn enumerate_subgraphs(graph: &KnowledgeGraph, qtype: QuestionType, limits: EnumerationLimits) -> Vec<Subgraph> {
    let mut found = match qtype {
        QuestionType::Simple => simple(graph),
        QuestionType::Set => sets(graph, limits.max_set_fanout.max(2)),
        QuestionType::MultiHop | QuestionType::Conditional => meeting_pairs(graph)
            .into_iter()
            .map(|(pair, meet)| pair_subgraph(graph, qtype, pair, meet))
            .collect(),
    };
    found.sort_by_cached_key(|sg| sg.triplets.iter().map(|&i| sort_key(graph, i)).collect::<Vec<_>>());
    if let Some(max) = limits.max_results {
        found.truncate(max);
    }
    found
}

/// Uncapped template match counts per question type.
pub fn count_template_matches(graph: &KnowledgeGraph) -> BTreeMap<QuestionType, usize> {
    QuestionType::ALL
        .into_iter()
        .map(|qtype| {
            let n = enumerate_subgraphs(graph, qtype, EnumerationLimits::unbounded()).len();
            (qtype, n)
        })
        .collect()
}
