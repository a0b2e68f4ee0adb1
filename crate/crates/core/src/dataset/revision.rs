use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{assign_public_ids, bump_version, DatasetError, DocumentRecord, Version};
use crate::filtering::TestSet;
use crate::sampler::QuestionType;
use crate::text;

const SPLIT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicText {
    pub public_id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicQuestion {
    pub question_id: String,
    pub question: String,
    pub qtype: QuestionType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub internal_id: u64,
    pub public_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateQa {
    pub question_id: String,
    pub answer: String,
    pub answer_entities: Vec<String>,
    pub relevant_internal_ids: Vec<u64>,
}

/// The two splits a participant sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicSplits {
    pub version: Version,
    pub public_texts: Vec<PublicText>,
    pub public_questions: Vec<PublicQuestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRevision {
    pub version: Version,
    pub public_texts: Vec<PublicText>,
    pub public_questions: Vec<PublicQuestion>,
    pub private_mapping: Vec<MappingEntry>,
    pub private_qa: Vec<PrivateQa>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitHeader {
    split: String,
    format: u32,
    revision: Version,
    fields: Vec<String>,
    rows: usize,
}

pub(crate) const PUBLIC_TEXTS: &str = "public_texts.jsonl";
pub(crate) const PUBLIC_QUESTIONS: &str = "public_questions.jsonl";
pub(crate) const PRIVATE_MAPPING: &str = "private_mapping.jsonl";
pub(crate) const PRIVATE_QA: &str = "private_qa.jsonl";

fn encode<T: Serialize>(name: &str, version: Version, fields: &[&str], rows: &[T]) -> String {
    let header = SplitHeader {
        split: name.trim_end_matches(".jsonl").to_owned(),
        format: SPLIT_FORMAT,
        revision: version,
        fields: fields.iter().map(|f| (*f).to_owned()).collect(),
        rows: rows.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    out
}

/// Parses a schema-headed split file; checks the header against the
/// expected split, revision and row count.
pub(crate) fn decode<T: DeserializeOwned>(
    path: &Path,
    content: &str,
    version: Version,
) -> Result<Vec<T>, DatasetError> {
    let err = |reason: String| DatasetError::Split {
        path: path.to_owned(),
        reason,
    };
    let mut lines = content.lines();
    let header: SplitHeader = serde_json::from_str(lines.next().ok_or_else(|| err("empty file".into()))?)
        .map_err(|e| err(format!("header: {e}")))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if header.format != SPLIT_FORMAT || header.revision != version || !name.starts_with(&header.split) {
        return Err(err(format!(
            "header {} v{} for revision {} does not match",
            header.split, header.format, header.revision
        )));
    }
    let rows = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", i + 2))))
        .collect::<Result<Vec<T>, _>>()?;
    if rows.len() != header.rows {
        return Err(err(format!("header says {} rows, found {}", header.rows, rows.len())));
    }
    Ok(rows)
}

/// Revision named in a split file's header.
pub(crate) fn header_version(path: &Path, content: &str) -> Result<Version, DatasetError> {
    let header: SplitHeader =
        serde_json::from_str(content.lines().next().unwrap_or_default()).map_err(|e| DatasetError::Split {
            path: path.to_owned(),
            reason: format!("header: {e}"),
        })?;
    Ok(header.revision)
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(DatasetError::io(path))
}

impl PublicSplits {
    /// Writes both public split files into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir).map_err(DatasetError::io(dir))?;
        for (name, content) in self.files() {
            let p = dir.join(name);
            std::fs::write(&p, content).map_err(DatasetError::io(&p))?;
        }
        Ok(())
    }

    /// Reads the public split files from `dir`; the revision comes from
    /// the headers.
    pub fn read_dir(dir: &Path) -> Result<Self, DatasetError> {
        let p = dir.join(PUBLIC_TEXTS);
        let texts = read_file(&p)?;
        let version = header_version(&p, &texts)?;
        let public_texts = decode(&p, &texts, version)?;
        let q = dir.join(PUBLIC_QUESTIONS);
        let public_questions = decode(&q, &read_file(&q)?, version)?;
        Ok(Self {
            version,
            public_texts,
            public_questions,
        })
    }

    pub fn files(&self) -> [(&'static str, String); 2] {
        [
            (
                PUBLIC_TEXTS,
                encode(PUBLIC_TEXTS, self.version, &["public_id", "text"], &self.public_texts),
            ),
            (
                PUBLIC_QUESTIONS,
                encode(
                    PUBLIC_QUESTIONS,
                    self.version,
                    &["question_id", "question", "qtype"],
                    &self.public_questions,
                ),
            ),
        ]
    }

    pub fn question_ids(&self) -> BTreeSet<String> {
        self.public_questions.iter().map(|q| q.question_id.clone()).collect()
    }

    pub fn public_ids(&self) -> BTreeSet<u64> {
        self.public_texts.iter().map(|t| t.public_id).collect()
    }
}

impl DatasetRevision {
    pub fn public(&self) -> PublicSplits {
        PublicSplits {
            version: self.version,
            public_texts: self.public_texts.clone(),
            public_questions: self.public_questions.clone(),
        }
    }

    /// The four split files as (file name, contents), public ones first.
    pub fn files(&self) -> [(&'static str, String); 4] {
        let [texts, questions] = self.public().files();
        [
            texts,
            questions,
            (
                PRIVATE_MAPPING,
                encode(
                    PRIVATE_MAPPING,
                    self.version,
                    &["internal_id", "public_id"],
                    &self.private_mapping,
                ),
            ),
            (
                PRIVATE_QA,
                encode(
                    PRIVATE_QA,
                    self.version,
                    &["question_id", "answer", "answer_entities", "relevant_internal_ids"],
                    &self.private_qa,
                ),
            ),
        ]
    }

    /// Writes all four splits into one flat directory.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir).map_err(DatasetError::io(dir))?;
        for (name, content) in self.files() {
            let p = dir.join(name);
            std::fs::write(&p, content).map_err(DatasetError::io(&p))?;
        }
        Ok(())
    }

    /// Reads a flat four-split directory, such as a sandbox.
    pub fn read_dir(dir: &Path) -> Result<Self, DatasetError> {
        let public = PublicSplits::read_dir(dir)?;
        let v = public.version;
        let m = dir.join(PRIVATE_MAPPING);
        let private_mapping = decode(&m, &read_file(&m)?, v)?;
        let q = dir.join(PRIVATE_QA);
        let private_qa = decode(&q, &read_file(&q)?, v)?;
        Ok(Self {
            version: v,
            public_texts: public.public_texts,
            public_questions: public.public_questions,
            private_mapping,
            private_qa,
        })
    }

    pub fn public_id_of(&self) -> BTreeMap<u64, u64> {
        self.private_mapping
            .iter()
            .map(|m| (m.internal_id, m.public_id))
            .collect()
    }

    /// Relevant public ids per question id.
    pub fn relevant_public_ids(&self) -> BTreeMap<String, BTreeSet<u64>> {
        let map = self.public_id_of();
        self.private_qa
            .iter()
            .map(|qa| {
                let ids = qa
                    .relevant_internal_ids
                    .iter()
                    .filter_map(|i| map.get(i).copied())
                    .collect();
                (qa.question_id.clone(), ids)
            })
            .collect()
    }

    pub fn check_invariants(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Invariant(m));
        let texts: BTreeSet<u64> = self.public_texts.iter().map(|t| t.public_id).collect();
        if texts.len() != self.public_texts.len() {
            return bad("duplicate public id in public texts".into());
        }
        let mut by_public: BTreeMap<u64, usize> = BTreeMap::new();
        let mut internal = BTreeSet::new();
        for m in &self.private_mapping {
            *by_public.entry(m.public_id).or_default() += 1;
            if !internal.insert(m.internal_id) {
                return bad(format!("internal id {} mapped twice", m.internal_id));
            }
        }
        for id in &texts {
            if by_public.get(id) != Some(&1) {
                return bad(format!("public id {id} is not mapped exactly once"));
            }
        }
        let ids: Vec<&str> = self.public_questions.iter().map(|q| q.question_id.as_str()).collect();
        let expected: Vec<String> = (0..ids.len()).map(|i| i.to_string()).collect();
        if ids != expected {
            return bad("question ids are not 0..n in order".into());
        }
        let private_ids: Vec<&str> = self.private_qa.iter().map(|q| q.question_id.as_str()).collect();
        if private_ids != ids {
            return bad("private answers do not line up with public questions".into());
        }
        let map = self.public_id_of();
        for (qa, q) in self.private_qa.iter().zip(&self.public_questions) {
            if qa.relevant_internal_ids.is_empty() {
                return bad(format!("question {} has no relevant documents", qa.question_id));
            }
            for doc in &qa.relevant_internal_ids {
                match map.get(doc) {
                    Some(p) if texts.contains(p) => {}
                    _ => return bad(format!("question {} cites unresolvable document {doc}", qa.question_id)),
                }
            }
            let answer = text::match_form(&qa.answer);
            if !answer.is_empty() && text::match_form(&q.question).contains(&answer) {
                return bad(format!("question {} contains its answer", qa.question_id));
            }
        }
        Ok(())
    }
}

/// Turns the final test set into the next revision.
///
/// `docs` become the public texts, so they must include every document a
/// question cites. Questions are numbered "0".."n-1" in test-set order.
pub fn build_revision(
    testset: &TestSet,
    docs: &[DocumentRecord],
    latest: Version,
    seed: u64,
) -> Result<DatasetRevision, DatasetError> {
    if testset.is_empty() {
        return Err(DatasetError::EmptyTestSet);
    }
    let known: BTreeSet<u64> = docs.iter().map(|d| d.internal_id).collect();
    for qa in testset.iter() {
        if let Some(doc) = qa.source_docs.iter().find(|d| !known.contains(d)) {
            return Err(DatasetError::DanglingSource {
                question: qa.id,
                doc: *doc,
            });
        }
    }
    let mapping = assign_public_ids(docs, seed)?;
    let mut public_texts: Vec<PublicText> = docs
        .iter()
        .map(|d| PublicText {
            public_id: mapping[&d.internal_id],
            text: d.text.clone(),
        })
        .collect();
    public_texts.sort_by_key(|t| t.public_id);
    let (public_questions, private_qa) = testset
        .iter()
        .enumerate()
        .map(|(i, qa)| {
            let question_id = i.to_string();
            (
                PublicQuestion {
                    question_id: question_id.clone(),
                    question: qa.question.clone(),
                    qtype: qa.qtype,
                },
                PrivateQa {
                    question_id,
                    answer: qa.answer.clone(),
                    answer_entities: qa.answer_entities.iter().map(|e| e.normalized_form.clone()).collect(),
                    relevant_internal_ids: qa.source_docs.iter().copied().collect(),
                },
            )
        })
        .unzip();
    let revision = DatasetRevision {
        version: bump_version(latest),
        public_texts,
        public_questions,
        private_mapping: mapping
            .into_iter()
            .map(|(internal_id, public_id)| MappingEntry { internal_id, public_id })
            .collect(),
        private_qa,
    };
    revision.check_invariants()?;
    Ok(revision)
}
