//! Criterion judge: one prompt per criterion, each rated 0 to 2.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::backend::{BackendError, RetryPolicy, TextBackend};
use crate::generation::QAPair;

/// A closed set of judge criteria.
pub trait Criterion: Copy + Ord + Debug + DeserializeOwned + Serialize + Send + Sync + 'static {
    const ALL: &'static [Self];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaCriterion {
    QuestionLiteracy,
    QuestionClarity,
    QuestionNaturalness,
    ContextSufficiency,
    ContextNecessity,
    AnswerLiteracy,
    AnswerCorrectness,
    AnswerUniqueness,
}

impl Criterion for QaCriterion {
    const ALL: &'static [Self] = &[
        QaCriterion::QuestionLiteracy,
        QaCriterion::QuestionClarity,
        QaCriterion::QuestionNaturalness,
        QaCriterion::ContextSufficiency,
        QaCriterion::ContextNecessity,
        QaCriterion::AnswerLiteracy,
        QaCriterion::AnswerCorrectness,
        QaCriterion::AnswerUniqueness,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionPrompt<C> {
    pub key: C,
    pub title: String,
    pub description: String,
    #[serde(default)]
    pub with_answer: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogFile<C> {
    prompt: String,
    criteria: Vec<CriterionPrompt<C>>,
}

/// Prompt template plus one entry per criterion, loaded from TOML.
#[derive(Debug, Clone)]
pub struct CriteriaCatalog<C = QaCriterion> {
    template: String,
    criteria: Vec<CriterionPrompt<C>>,
}

const QA_CATALOG: &str = include_str!("../../catalogs/qa_criteria.en.toml");

impl<C: Criterion> CriteriaCatalog<C> {
    /// Parses a catalog; it must list every criterion exactly once.
    pub fn parse(toml_text: &str) -> Result<Self, FilterError> {
        let file: CatalogFile<C> = toml::from_str(toml_text).map_err(|e| FilterError::Catalog(e.to_string()))?;
        let keys: Vec<C> = file.criteria.iter().map(|c| c.key).collect();
        let unique: BTreeSet<C> = keys.iter().copied().collect();
        let expected: BTreeSet<C> = C::ALL.iter().copied().collect();
        if unique.len() != keys.len() || unique != expected {
            return Err(FilterError::Catalog(format!(
                "criteria {keys:?} do not match {:?}",
                C::ALL
            )));
        }
        Ok(Self {
            template: file.prompt,
            criteria: file.criteria,
        })
    }

    pub fn criteria(&self) -> &[CriterionPrompt<C>] {
        &self.criteria
    }

    pub fn template(&self) -> &str {
        &self.template
    }
}

impl CriteriaCatalog<QaCriterion> {
    pub fn builtin() -> Self {
        Self::parse(QA_CATALOG).expect("built-in QA criteria catalog parses")
    }

    /// The judge prompt for one criterion. Only answer criteria see the
    /// answer.
    pub fn render(&self, criterion: &CriterionPrompt<QaCriterion>, qa: &QAPair, document: &str) -> String {
        let answer_block = if criterion.with_answer {
            format!("Answer: {}\n", qa.answer)
        } else {
            String::new()
        };
        self.template
            .trim_start()
            .replace("{title}", &criterion.title)
            .replace("{description}", &criterion.description)
            .replace("{document}", document)
            .replace("{question}", &qa.question)
            .replace("{answer_block}", &answer_block)
    }
}

/// Reads a 0 to 2 rating: the first number in the reply.
pub fn parse_rating(reply: &str) -> Result<u8, String> {
    let digits: String = reply
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect();
    match digits.parse::<u8>() {
        Ok(r) if r <= 2 => Ok(r),
        Ok(r) => Err(format!("rating {r} outside 0..=2")),
        Err(_) => Err(format!("no rating in reply {reply:?}")),
    }
}

/// One 0 to 2 rating for each criterion of `C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "C: Criterion")]
pub struct JudgeRatings<C: Criterion = QaCriterion>(BTreeMap<C, u8>);

impl<C: Criterion> JudgeRatings<C> {
    pub fn new(ratings: BTreeMap<C, u8>) -> Result<Self, FilterError> {
        let missing: Vec<C> = C::ALL.iter().copied().filter(|c| !ratings.contains_key(c)).collect();
        if !missing.is_empty() {
            return Err(FilterError::Ratings(format!("missing criteria {missing:?}")));
        }
        if let Some((c, r)) = ratings.iter().find(|(_, r)| **r > 2) {
            return Err(FilterError::Ratings(format!("{c:?} rated {r}")));
        }
        Ok(Self(ratings))
    }

    pub fn get(&self, criterion: C) -> u8 {
        self.0[&criterion]
    }

    pub fn iter(&self) -> impl Iterator<Item = (C, u8)> + '_ {
        self.0.iter().map(|(c, r)| (*c, *r))
    }

    pub fn min(&self) -> u8 {
        self.0.values().copied().min().unwrap_or(0)
    }

    /// Every criterion rated 1 or higher.
    pub fn passes(&self) -> bool {
        self.min() >= 1
    }
}

/// Rates `qa` on every criterion of the catalog. Any backend failure or
/// unreadable rating leaves the pair undecided (`Err`).
pub fn judge_filter(
    qa: &QAPair,
    document: &str,
    judge: &dyn TextBackend,
    catalog: &CriteriaCatalog<QaCriterion>,
    retry: RetryPolicy,
) -> Result<(JudgeRatings, bool), BackendError> {
    let mut ratings = BTreeMap::new();
    for criterion in catalog.criteria() {
        let prompt = catalog.render(criterion, qa, document);
        let reply = retry.run(|| judge.complete(&prompt))?;
        let rating = parse_rating(&reply).map_err(|e| BackendError::Fatal(format!("{:?}: {e}", criterion.key)))?;
        ratings.insert(criterion.key, rating);
    }
    let ratings = JudgeRatings::new(ratings).map_err(|e| BackendError::Fatal(e.to_string()))?;
    let passed = ratings.passes();
    Ok((ratings, passed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FnBackend, ScriptedBackend};
    use crate::testkit::qa_pair;
    use crate::QuestionType;

    fn qa() -> QAPair {
        qa_pair(
            QuestionType::Simple,
            &[("Morty Smith", "voice", "Keisuke Chiba")],
            "Who voiced Morty Smith?",
            "Keisuke Chiba",
        )
    }

    fn judge_all(reply: &'static str) -> (JudgeRatings, bool) {
        judge_filter(
            &qa(),
            "article",
            &ScriptedBackend::constant(reply),
            &CriteriaCatalog::builtin(),
            RetryPolicy::immediate(),
        )
        .unwrap()
    }

    #[test]
    fn builtin_catalog_has_eight_criteria() {
        let catalog = CriteriaCatalog::builtin();
        assert_eq!(catalog.criteria().len(), 8);
        assert_eq!(catalog.criteria().iter().filter(|c| c.with_answer).count(), 3);
    }

    #[test]
    fn all_twos_pass() {
        let (ratings, passed) = judge_all("2");
        assert!(passed);
        assert_eq!(ratings.iter().count(), 8);
    }

    #[test]
    fn all_ones_pass() {
        assert!(judge_all("Rating: 1").1);
    }

    #[test]
    fn a_single_zero_fails() {
        let judge = ScriptedBackend::new()
            .with_rule("Context necessity", "0")
            .with_fallback("2");
        let (ratings, passed) = judge_filter(
            &qa(),
            "a",
            &judge,
            &CriteriaCatalog::builtin(),
            RetryPolicy::immediate(),
        )
        .unwrap();
        assert!(!passed);
        assert_eq!(ratings.get(QaCriterion::ContextNecessity), 0);
    }

    #[test]
    fn answer_only_shown_to_answer_criteria() {
        let judge = ScriptedBackend::constant("2");
        judge_filter(
            &qa(),
            "a",
            &judge,
            &CriteriaCatalog::builtin(),
            RetryPolicy::immediate(),
        )
        .unwrap();
        let prompts = judge.prompts();
        let with_answer = prompts.iter().filter(|p| p.contains("Answer: Keisuke Chiba")).count();
        assert_eq!(with_answer, 3);
        assert!(prompts.iter().all(|p| p.contains("Who voiced Morty Smith?")));
    }

    #[test]
    fn judge_failure_is_an_error() {
        let judge = FnBackend(|_: &str| Err(BackendError::Fatal("down".into())));
        assert!(judge_filter(
            &qa(),
            "a",
            &judge,
            &CriteriaCatalog::builtin(),
            RetryPolicy::immediate()
        )
        .is_err());
        let garbage = ScriptedBackend::constant("excellent");
        assert!(judge_filter(
            &qa(),
            "a",
            &garbage,
            &CriteriaCatalog::builtin(),
            RetryPolicy::immediate()
        )
        .is_err());
    }

    #[test]
    fn rating_parse() {
        assert_eq!(parse_rating(" 2 "), Ok(2));
        assert_eq!(parse_rating("Score: 0/2"), Ok(0));
        assert!(parse_rating("5").is_err());
        assert!(parse_rating("none").is_err());
    }

    #[test]
    fn ratings_require_every_criterion() {
        let mut partial = BTreeMap::new();
        partial.insert(QaCriterion::QuestionClarity, 2);
        assert!(JudgeRatings::<QaCriterion>::new(partial).is_err());
    }

    #[test]
    fn catalog_with_duplicate_or_missing_keys_is_rejected() {
        let text = "prompt = \"x\"\n[[criteria]]\nkey = \"question_literacy\"\ntitle = \"t\"\ndescription = \"d\"\n";
        assert!(CriteriaCatalog::<QaCriterion>::parse(text).is_err());
    }
}
