use serde::{Deserialize, Serialize};

use super::{match_entity_candidates, Candidate, KbIndex, Triplet, MAX_CANDIDATES};
use crate::backend::{BackendError, Embedder, RetryPolicy, TextBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Subject,
    Relation,
    Object,
}

impl Slot {
    const ALL: [Slot; 3] = [Slot::Subject, Slot::Relation, Slot::Object];

    fn name(self) -> &'static str {
        match self {
            Slot::Subject => "subject",
            Slot::Relation => "relation",
            Slot::Object => "object",
        }
    }
}

/// Knowledge-base candidates for each slot of one triplet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotCandidates {
    pub subject: Vec<Candidate>,
    pub relation: Vec<Candidate>,
    pub object: Vec<Candidate>,
}

impl SlotCandidates {
    pub fn get(&self, slot: Slot) -> &[Candidate] {
        match slot {
            Slot::Subject => &self.subject,
            Slot::Relation => &self.relation,
            Slot::Object => &self.object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    pub slot: Slot,
    pub original: String,
    pub adopted: Option<Candidate>,
}

/// Audit entry for one normalization call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub source_doc: u64,
    pub original: String,
    pub normalized: String,
    pub decisions: Vec<SlotDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn slot_form(triplet: &Triplet, slot: Slot) -> &str {
    match slot {
        Slot::Subject => &triplet.subject.surface_form,
        Slot::Relation => &triplet.relation.label,
        Slot::Object => &triplet.object.surface_form,
    }
}

pub fn build_resolver_prompt(triplet: &Triplet, slot: Slot, candidates: &[Candidate], context: &str) -> String {
    let mut prompt = format!(
        "Decide whether the {slot} of the fact below refers to one of the knowledge-base candidates.\n\
         \n\
         Source text:\n{context}\n\
         \n\
         Fact: {} | {} | {}\n\
         {slot}: {}\n\
         Candidates:\n",
        triplet.subject.surface_form,
        triplet.relation.label,
        triplet.object.surface_form,
        slot_form(triplet, slot),
        slot = slot.name(),
    );
    for (i, c) in candidates.iter().enumerate() {
        prompt.push_str(&format!("{}. {} ({})\n", i + 1, c.label, c.kb_id));
    }
    prompt.push_str("Reply with the number of the matching candidate, or 0 to keep the original.\n");
    prompt
}

fn parse_choice(reply: &str, count: usize) -> Result<Option<usize>, String> {
    let number: String = reply
        .trim()
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect();
    let choice: usize = number
        .parse()
        .map_err(|_| format!("resolver reply has no choice: {reply:?}"))?;
    match choice {
        0 => Ok(None),
        n if n <= count => Ok(Some(n - 1)),
        n => Err(format!("resolver chose {n} of {count} candidates")),
    }
}

/// Lets the resolver adopt at most one candidate per slot.
///
/// On any resolver failure the triplet is returned with its extracted forms
/// and `flags.unnormalized` set. Slots without candidates are not sent to
/// the resolver.
pub fn normalize_triplet(
    triplet: &Triplet,
    candidates: &SlotCandidates,
    resolver: &dyn TextBackend,
    context: &str,
    retry: RetryPolicy,
) -> (Triplet, NormalizationRecord) {
    let mut decisions = Vec::with_capacity(3);
    let mut failure = None;
    for slot in Slot::ALL {
        let cands = candidates.get(slot);
        let mut decision = SlotDecision {
            slot,
            original: slot_form(triplet, slot).to_owned(),
            adopted: None,
        };
        if !cands.is_empty() {
            let cands = &cands[..cands.len().min(MAX_CANDIDATES)];
            let prompt = build_resolver_prompt(triplet, slot, cands, context);
            let choice = retry
                .run(|| resolver.complete(&prompt))
                .map_err(|e| e.to_string())
                .and_then(|reply| parse_choice(&reply, cands.len()));
            match choice {
                Ok(choice) => decision.adopted = choice.map(|i| cands[i].clone()),
                Err(reason) => {
                    failure = Some(format!("{}: {reason}", slot.name()));
                    break;
                }
            }
        }
        decisions.push(decision);
    }

    let mut normalized = triplet.clone();
    if failure.is_some() {
        normalized.flags.unnormalized = true;
    } else {
        for decision in &decisions {
            if let Some(c) = &decision.adopted {
                match decision.slot {
                    Slot::Subject => normalized.subject.adopt(c),
                    Slot::Relation => normalized.relation.adopt(c),
                    Slot::Object => normalized.object.adopt(c),
                }
            }
        }
    }
    let record = NormalizationRecord {
        source_doc: triplet.source_doc,
        original: triplet.render(),
        normalized: normalized.render(),
        decisions,
        failure,
    };
    (normalized, record)
}

/// Candidate lookup plus resolution against entity and property indices.
pub struct Normalizer<'a> {
    pub entities: &'a KbIndex,
    pub properties: &'a KbIndex,
    pub embedder: &'a dyn Embedder,
    pub resolver: &'a dyn TextBackend,
    pub retry: RetryPolicy,
}

impl Normalizer<'_> {
    pub fn candidates(&self, triplet: &Triplet) -> Result<SlotCandidates, BackendError> {
        Ok(SlotCandidates {
            subject: match_entity_candidates(&triplet.subject, self.entities, self.embedder)?,
            relation: self
                .properties
                .candidates(&triplet.relation.label, self.embedder, MAX_CANDIDATES)?,
            object: match_entity_candidates(&triplet.object, self.entities, self.embedder)?,
        })
    }

    /// Normalizes one triplet; candidate lookup failures are treated like
    /// resolver failures.
    pub fn normalize(&self, triplet: &Triplet, context: &str) -> (Triplet, NormalizationRecord) {
        match self.candidates(triplet) {
            Ok(cands) => normalize_triplet(triplet, &cands, self.resolver, context, self.retry),
            Err(err) => {
                let mut kept = triplet.clone();
                kept.flags.unnormalized = true;
                let record = NormalizationRecord {
                    source_doc: triplet.source_doc,
                    original: triplet.render(),
                    normalized: kept.render(),
                    decisions: Vec::new(),
                    failure: Some(format!("candidate lookup: {err}")),
                };
                (kept, record)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FnBackend, ScriptedBackend};
    use crate::kg::{EntityId, KnowledgeGraph};

    fn cand(id: &str, label: &str) -> Candidate {
        Candidate {
            kb_id: id.into(),
            label: label.into(),
            score: 0.9,
        }
    }

    #[test]
    fn adopts_first_candidate_for_subject() {
        let t = Triplet::new("Morty", "voice", "Keisuke Chiba", 1);
        let cands = SlotCandidates {
            subject: vec![cand("Q1", "Morty Smith"), cand("Q2", "Morty Seinfeld")],
            ..Default::default()
        };
        let resolver = ScriptedBackend::constant("1");
        let (n, record) = normalize_triplet(&t, &cands, &resolver, "ctx", RetryPolicy::immediate());
        assert_eq!(n.subject.normalized_form, "Morty Smith");
        assert_eq!(n.subject.kb_match.as_deref(), Some("Q1"));
        assert!(n.subject.aliases.contains("Morty"));
        assert_eq!(record.decisions.len(), 3);
        assert_eq!(resolver.prompts().len(), 1);
        assert!(resolver.prompts()[0].contains("ctx"));
    }

    #[test]
    fn declining_keeps_triplet_unchanged() {
        let t = Triplet::new("Morty", "voice", "Keisuke Chiba", 1);
        let cands = SlotCandidates {
            subject: vec![cand("Q1", "Morty Smith")],
            relation: vec![cand("P1", "voice actor")],
            object: vec![cand("Q3", "Chiba")],
        };
        let resolver = ScriptedBackend::constant("0");
        let (n, record) = normalize_triplet(&t, &cands, &resolver, "", RetryPolicy::immediate());
        assert_eq!(n, t);
        assert!(record.decisions.iter().all(|d| d.adopted.is_none()));
    }

    #[test]
    fn resolver_failure_flags_triplet() {
        let t = Triplet::new("Morty", "voice", "Keisuke Chiba", 1);
        let cands = SlotCandidates {
            subject: vec![cand("Q1", "Morty Smith")],
            ..Default::default()
        };
        for resolver in [
            Box::new(ScriptedBackend::constant("7")) as Box<dyn TextBackend>,
            Box::new(ScriptedBackend::constant("no idea")),
            Box::new(FnBackend(|_: &str| Err(BackendError::Fatal("down".into())))),
        ] {
            let (n, record) = normalize_triplet(&t, &cands, &resolver, "", RetryPolicy::immediate());
            assert!(n.flags.unnormalized);
            assert_eq!(n.subject, t.subject);
            assert!(record.failure.is_some());
        }
    }

    #[test]
    fn surface_variants_unify_to_one_entity() {
        let a = Triplet::new("Ryan Otter", "composed music for", "Method", 1);
        let b = Triplet::new("R. Otter", "composed music for", "Trigger", 2);
        let cands = SlotCandidates {
            subject: vec![cand("Q42", "Ryan Otter")],
            ..Default::default()
        };
        let resolver = ScriptedBackend::constant("1");
        let (na, _) = normalize_triplet(&a, &cands, &resolver, "doc one", RetryPolicy::immediate());
        let (nb, _) = normalize_triplet(&b, &cands, &resolver, "doc two", RetryPolicy::immediate());
        let graph = KnowledgeGraph::from_triplets([na, nb]).unwrap();
        let id = EntityId::from_form("Ryan Otter");
        assert_eq!(graph.incident(&id).len(), 2);
        assert_eq!(graph.entity(&id).unwrap().aliases.len(), 2);
    }

    #[test]
    fn normalized_forms_come_from_original_or_candidates() {
        let t = Triplet::new("a", "r", "b", 0);
        let cands = SlotCandidates {
            subject: vec![cand("Q1", "A1"), cand("Q2", "A2")],
            relation: vec![cand("P1", "R1")],
            object: vec![cand("Q3", "B1"), cand("Q4", "B2"), cand("Q5", "B3")],
        };
        for reply in ["0", "1", "2", "3"] {
            let resolver = ScriptedBackend::constant(reply);
            let (n, _) = normalize_triplet(&t, &cands, &resolver, "", RetryPolicy::immediate());
            if n.flags.unnormalized {
                assert_eq!(n, {
                    let mut kept = t.clone();
                    kept.flags.unnormalized = true;
                    kept
                });
                continue;
            }
            assert!(["a", "A1", "A2"].contains(&n.subject.normalized_form.as_str()));
            assert!(["r", "R1"].contains(&n.relation.normalized_label.as_str()));
            assert!(["b", "B1", "B2", "B3"].contains(&n.object.normalized_form.as_str()));
        }
    }
}
