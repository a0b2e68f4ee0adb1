use ragbench_core::dataset::DatasetRevision;
use ragbench_core::evaluation::{evaluate_answers, Evaluation, EvaluationError};
use ragbench_core::submission::{Answers, Submission};
use serde::{Deserialize, Serialize};

/// Metrics that need a judge model are not computed locally.
pub const UNSUPPORTED_LOCALLY: [&str; 1] = ["judge_score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub evaluation: Evaluation,
    pub unsupported_locally: Vec<String>,
}

/// Scores answers against a sandbox revision with the same code the
/// service uses, minus the judge.
pub fn local_evaluate(answers: &Answers, sandbox: &DatasetRevision) -> Result<LocalReport, EvaluationError> {
    Ok(LocalReport {
        evaluation: evaluate_answers(answers, sandbox, None)?,
        unsupported_locally: UNSUPPORTED_LOCALLY.iter().map(|s| (*s).to_owned()).collect(),
    })
}

/// As [`local_evaluate`], after checking the submission's revision.
pub fn local_evaluate_submission(sub: &Submission, sandbox: &DatasetRevision) -> Result<LocalReport, EvaluationError> {
    if sub.revision != sandbox.version {
        return Err(EvaluationError::RevisionMismatch {
            submitted: sub.revision,
            expected: sandbox.version,
        });
    }
    local_evaluate(&sub.answers, sandbox)
}
