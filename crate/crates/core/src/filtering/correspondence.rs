//! Graph correspondence: does the generated pair mention the subgraph's
//! entities where its template says they belong?

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{presence_coefficient, FilterError, FilterStage, FilterVerdict};
use crate::generation::QAPair;
use crate::kg::EntityId;
use crate::sampler::{QuestionType, Role};

/// Presence of one entity in the question and in the answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub question: f64,
    pub answer: f64,
}

impl Presence {
    fn better(self) -> f64 {
        self.question.max(self.answer)
    }

    fn worse(self) -> f64 {
        self.question.min(self.answer)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PresenceCoefficients {
    pub values: BTreeMap<EntityId, Presence>,
}

/// Presence coefficients of every subgraph entity, using normalized forms.
pub fn compute_presence(qa: &QAPair) -> PresenceCoefficients {
    let values = qa
        .entity_forms()
        .into_iter()
        .map(|(id, form)| {
            let presence = Presence {
                question: presence_coefficient(&form, &qa.question),
                answer: presence_coefficient(&form, &qa.answer),
            };
            (id, presence)
        })
        .collect();
    PresenceCoefficients { values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Minimum coefficient for an entity to count as mentioned.
    pub presence: f64,
    /// A bridge entity at or above this is a template violation.
    pub bridge: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            presence: 0.75,
            bridge: 0.75,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Checks the pair against its subgraph. The verdict's score is what the
/// corpus-level trimming later ranks on.
///
/// * Set, Conditional: mean question-presence of the question-side entities
///   and mean answer-presence of the answer entities must both reach the
///   threshold.
/// * Simple: each entity must be mentioned exactly once across the pair:
///   its better side reaches the threshold and its other side does not.
/// * MultiHop: the Simple rule for the two outer entities, and the bridge
///   must stay below the bridge threshold on both sides.
pub fn graph_correspondence(
    qa: &QAPair,
    coeffs: &PresenceCoefficients,
    thresholds: Thresholds,
) -> Result<FilterVerdict, FilterError> {
    let mut by_role: BTreeMap<Role, Vec<(&EntityId, Presence)>> = BTreeMap::new();
    for (id, role) in &qa.subgraph.roles {
        let presence = *coeffs
            .values
            .get(id)
            .ok_or_else(|| FilterError::MissingCoefficients(id.to_string()))?;
        by_role.entry(*role).or_default().push((id, presence));
    }
    let group = |roles: &[Role]| -> Vec<(&EntityId, Presence)> {
        roles
            .iter()
            .flat_map(|r| by_role.get(r).cloned().unwrap_or_default())
            .collect()
    };
    let theta = thresholds.presence;
    let stage = FilterStage::GraphCorrespondence;

    let verdict = match qa.qtype {
        QuestionType::Set | QuestionType::Conditional => {
            let question_side = group(&[Role::Shared, Role::QuestionSlot]);
            let answer_side = group(&[Role::AnswerSlot]);
            let q = mean(&question_side.iter().map(|(_, p)| p.question).collect::<Vec<_>>());
            let a = mean(&answer_side.iter().map(|(_, p)| p.answer).collect::<Vec<_>>());
            let details = format!("question-side mean {q:.3}, answer-side mean {a:.3}");
            if q >= theta && a >= theta {
                FilterVerdict::pass(stage, Some(q.min(a)), details)
            } else {
                FilterVerdict::fail(stage, Some(q.min(a)), details)
            }
        }
        QuestionType::Simple | QuestionType::MultiHop => {
            let outer = group(&[Role::QuestionSlot, Role::AnswerSlot]);
            let score = mean(&outer.iter().map(|(_, p)| p.better()).collect::<Vec<_>>());
            let mut problems = Vec::new();
            for (id, p) in &outer {
                if p.better() < theta {
                    problems.push(format!("{id} not mentioned ({:.3})", p.better()));
                } else if p.worse() >= theta {
                    problems.push(format!("{id} mentioned in both question and answer"));
                }
            }
            for (id, p) in group(&[Role::Bridge]) {
                if p.better() >= thresholds.bridge {
                    problems.push(format!("bridge violation: {id} is mentioned ({:.3})", p.better()));
                }
            }
            if problems.is_empty() {
                FilterVerdict::pass(stage, Some(score), format!("mean presence {score:.3}"))
            } else {
                FilterVerdict::fail(stage, Some(score), problems.join("; "))
            }
        }
    };
    Ok(verdict)
}
