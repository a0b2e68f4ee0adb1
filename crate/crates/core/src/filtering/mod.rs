//! The QA filter cascade.
//!
//! Stages run in a fixed order, cheapest first: linguistic acceptability,
//! named-entity presence, closed-book answerability, graph correspondence
//! and finally the criterion judge. A pair leaves the cascade at its first
//! failing stage. A stage whose backend fails marks the pair
//! indeterminate; such pairs are quarantined for the next run rather than
//! dropped.

mod cascade;
mod correspondence;
mod judge;
mod presence;
mod select;
mod stages;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::QuestionType;

pub use cascade::{run_cascade, write_audit_report, CascadeOutcome, FilterBackends, FilterConfig};
pub use correspondence::{compute_presence, graph_correspondence, Presence, PresenceCoefficients, Thresholds};
pub use judge::{judge_filter, parse_rating, CriteriaCatalog, Criterion, CriterionPrompt, JudgeRatings, QaCriterion};
pub use presence::{levenshtein, presence_coefficient};
pub use select::{finalize_testset, trim_extremes, TestSet};
pub use stages::{
    build_closed_book_prompt, check_named_entities, closed_book_check, score_acceptability, AcceptabilityScorer,
    EntityRecognizer, HeuristicRecognizer, NerCheck,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStage {
    Acceptability,
    Ner,
    ClosedBook,
    GraphCorrespondence,
    Judge,
}

/// Outcome of one stage for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub stage: FilterStage,
    pub passed: bool,
    /// Set when a backend failed and the stage could not decide.
    #[serde(default)]
    pub indeterminate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default)]
    pub details: String,
}

impl FilterVerdict {
    pub fn pass(stage: FilterStage, score: Option<f64>, details: impl Into<String>) -> Self {
        Self {
            stage,
            passed: true,
            indeterminate: false,
            score,
            details: details.into(),
        }
    }

    pub fn fail(stage: FilterStage, score: Option<f64>, details: impl Into<String>) -> Self {
        Self {
            passed: false,
            ..Self::pass(stage, score, details)
        }
    }

    pub fn indeterminate(stage: FilterStage, details: impl Into<String>) -> Self {
        Self {
            indeterminate: true,
            ..Self::fail(stage, None, details)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("no presence coefficients for entity {0}")]
    MissingCoefficients(String),
    #[error("trim fraction {0} outside [0, 0.5)")]
    BadFraction(f64),
    #[error("not enough pairs for the quota of {quota}: {}", format_shortfall(.deficient))]
    QuotaShortfall {
        quota: usize,
        deficient: Vec<(QuestionType, usize)>,
    },
    #[error("invalid judge ratings: {0}")]
    Ratings(String),
    #[error("invalid criteria catalog: {0}")]
    Catalog(String),
}

fn format_shortfall(deficient: &[(QuestionType, usize)]) -> String {
    deficient
        .iter()
        .map(|(t, n)| format!("{t} has {n}"))
        .collect::<Vec<_>>()
        .join(", ")
}
