//! Fixtures for tests: hand-built pairs and a synthetic corpus with
//! scripted backends.

use crate::backend::ScriptedBackend;
use crate::generation::{generate_qa, GenerationConfig, PromptCatalog, QAPair};
use crate::kg::{KnowledgeGraph, Triplet};
use crate::sampler::{enumerate_subgraphs, EnumerationLimits, QuestionType};

/// A pair over the graph of `facts` (fact `i` comes from document `i`),
/// using the first enumerated subgraph of `qtype`.
pub fn qa_pair(qtype: QuestionType, facts: &[(&str, &str, &str)], question: &str, answer: &str) -> QAPair {
    let graph = KnowledgeGraph::from_triplets(
        facts
            .iter()
            .enumerate()
            .map(|(i, (s, r, o))| Triplet::new(s, r, o, i as u64)),
    )
    .expect("fixture facts form a graph");
    let sg = enumerate_subgraphs(&graph, qtype, EnumerationLimits::default())
        .into_iter()
        .next()
        .unwrap_or_else(|| panic!("fixture facts have no {qtype} subgraph"));
    let backend = ScriptedBackend::constant(format!("Question: {question}\nAnswer: {answer}"));
    generate_qa(
        0,
        &graph,
        &sg,
        &backend,
        &PromptCatalog::english(),
        GenerationConfig::default(),
    )
    .expect("scripted generation succeeds")
}

/// `n` pairs of `qtype` with ids `start..start + n`.
pub fn numbered_pairs(qtype: QuestionType, start: u64, n: usize) -> Vec<QAPair> {
    let facts: &[(&str, &str, &str)] = match qtype {
        QuestionType::Simple => &[("Morty Smith", "voice", "Keisuke Chiba")],
        QuestionType::Set => &[
            ("Ryan Otter", "composed music for", "Method"),
            ("Ryan Otter", "composed music for", "Trigger"),
        ],
        QuestionType::MultiHop | QuestionType::Conditional => &[
            ("FAW", "country of origin", "China"),
            ("FAW", "number of cars sold in 2023", "2139"),
        ],
    };
    let base = qa_pair(qtype, facts, "Question?", "Answer");
    (0..n as u64)
        .map(|i| QAPair {
            id: start + i,
            question: format!("Question {}?", start + i),
            ..base.clone()
        })
        .collect()
}

pub mod fixture {
    //! A synthetic corpus whose documents each state four facts about one
    //! person, with backends scripted to extract exactly those facts and to
    //! write questions that pass every filter.

    use std::collections::BTreeMap;

    use crate::backend::{BackendError, FnBackend, ScriptedBackend, TextBackend};
    use crate::dataset::{default_cleaner, ingest_documents, DocumentRecord, RawDocument};
    use crate::filtering::{CriteriaCatalog, FilterBackends, HeuristicRecognizer};
    use crate::pipeline::PipelineBackends;

    const FIRST: [&str; 30] = [
        "Alma", "Boris", "Celia", "Dorian", "Edith", "Felix", "Greta", "Hector", "Irma", "Jasper", "Katya", "Lionel",
        "Marta", "Nestor", "Olga", "Piers", "Quinn", "Rosalind", "Soren", "Tamsin", "Ulric", "Vera", "Wendell",
        "Xenia", "Yorick", "Zelda", "Ansel", "Bettina", "Cyprian", "Delphine",
    ];
    const LAST: [&str; 30] = [
        "Achterberg",
        "Brennan",
        "Castellano",
        "Drummond",
        "Eklund",
        "Fairweather",
        "Galloway",
        "Hollister",
        "Ingersoll",
        "Jablonski",
        "Kowalczyk",
        "Lindqvist",
        "Montgomery",
        "Nakashima",
        "Oyelaran",
        "Pemberton",
        "Quackenbush",
        "Rasmussen",
        "Szabo",
        "Thorvaldsen",
        "Underhill",
        "Valdivia",
        "Whitcombe",
        "Xiong",
        "Yamamura",
        "Zabrowski",
        "Abernathy",
        "Bjornstad",
        "Cavendish",
        "Dubrovsky",
    ];
    const FIRM: [&str; 30] = [
        "Quartz", "Nimbus", "Basalt", "Juniper", "Cobalt", "Falcon", "Meridian", "Tundra", "Saffron", "Granite",
        "Harbor", "Obsidian", "Lantern", "Pinnacle", "Willow", "Ember", "Zephyr", "Marble", "Cascade", "Orchid",
        "Vertex", "Summit", "Beacon", "Thistle", "Aurora", "Bramble", "Citadel", "Drift", "Elm", "Fjord",
    ];
    const SUFFIX: [&str; 3] = ["Dynamics", "Laboratories", "Holdings"];
    const CITY: [&str; 5] = [
        "Port Elmsworth",
        "New Carradine",
        "East Violetta",
        "Lower Quimby",
        "Saint Ormond",
    ];
    const TITLE_A: [&str; 10] = [
        "Silver", "Hollow", "Crimson", "Distant", "Marble", "Velvet", "Frozen", "Golden", "Broken", "Quiet",
    ];
    const TITLE_B: [&str; 6] = [
        "Meridian Road",
        "Lighthouse",
        "Kingdom",
        "Orchard",
        "Symphony",
        "Voyage",
    ];

    /// `n` documents (at most 30) with four facts each.
    pub struct Corpus {
        pub documents: Vec<RawDocument>,
        pub facts: Vec<Vec<(String, String, String)>>,
    }

    impl Corpus {
        pub fn new(n: usize) -> Self {
            assert!(n <= FIRST.len(), "fixture corpus holds at most 30 documents");
            let mut documents = Vec::new();
            let mut facts = Vec::new();
            for i in 0..n {
                let person = format!("{} {}", FIRST[i], LAST[i]);
                let firm = format!("{} {}", FIRM[i], SUFFIX[i % 3]);
                let city = CITY[i % 5].to_owned();
                let film = |k: usize| format!("{} {}", TITLE_A[k % 10], TITLE_B[(k / 10) % 6]);
                let (a, b) = (film(2 * i), film(2 * i + 1));
                let text = format!(
                    "{person} founded {firm} after years in the trade. {firm} is based in {city}. \
                     Outside work, {person} composed music for {a} and {b}."
                );
                documents.push(RawDocument {
                    source: format!("fixture/{i:02}.txt"),
                    text,
                    fetched_at: 1_700_000_000 + i as u64,
                });
                facts.push(vec![
                    (person.clone(), "founded".into(), firm.clone()),
                    (firm, "based in".into(), city),
                    (person.clone(), "composed music for".into(), a),
                    (person, "composed music for".into(), b),
                ]);
            }
            Self { documents, facts }
        }

        /// Ingested records; internal ids follow document order from 0.
        pub fn records(&self) -> Vec<DocumentRecord> {
            ingest_documents(&self.documents, &default_cleaner, 0).records
        }

        pub fn fact_count(&self) -> usize {
            self.facts.iter().map(Vec::len).sum()
        }

        /// Extractor that returns each document's facts, keyed on the
        /// document's opening words.
        pub fn extractor(&self) -> ScriptedBackend {
            self.facts.iter().fold(ScriptedBackend::new(), |b, facts| {
                let lines: Vec<String> = facts.iter().map(|(s, r, o)| format!("{s} | {r} | {o}")).collect();
                b.with_rule(format!("{} founded ", facts[0].0), lines.join("\n"))
            })
        }
    }

    fn prompt_line<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
        prompt.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
    }

    /// Writes a question naming exactly the required entities and answers
    /// with the required answer.
    pub fn generator() -> impl TextBackend {
        FnBackend(|prompt: &str| {
            let mention = prompt_line(prompt, "The question must mention:")
                .ok_or_else(|| BackendError::Fatal("no question entities in prompt".into()))?;
            let answer = prompt_line(prompt, "The answer must be:")
                .or_else(|| prompt_line(prompt, "The answer must list all of:"))
                .ok_or_else(|| BackendError::Fatal("no answer in prompt".into()))?;
            let mention = mention.replace(", ", " and ");
            Ok(format!(
                "Question: Which entry is connected to {mention}?\nAnswer: {answer}"
            ))
        })
    }

    fn accept(_: &str) -> Result<f64, BackendError> {
        Ok(0.9)
    }

    /// Every backend the pipeline needs, scripted.
    pub struct Backends {
        pub extractor: ScriptedBackend,
        pub generator: Box<dyn TextBackend>,
        pub probe: ScriptedBackend,
        pub judge: ScriptedBackend,
        pub criteria: CriteriaCatalog,
    }

    impl Backends {
        pub fn new(corpus: &Corpus) -> Self {
            Self {
                extractor: corpus.extractor(),
                generator: Box::new(generator()),
                probe: ScriptedBackend::constant("I do not know."),
                judge: ScriptedBackend::constant("2"),
                criteria: CriteriaCatalog::builtin(),
            }
        }

        pub fn filters(&self) -> FilterBackends<'_> {
            FilterBackends {
                acceptability: &accept,
                ner: &HeuristicRecognizer,
                probes: vec![&self.probe],
                judge: &self.judge,
                criteria: &self.criteria,
            }
        }

        pub fn pipeline(&self) -> PipelineBackends<'_> {
            PipelineBackends {
                extractor: &self.extractor,
                normalizer: None,
                knowledge_base: None,
                generator: self.generator.as_ref(),
                filters: self.filters(),
            }
        }
    }

    /// Internal id to text, as the cascade takes it.
    pub fn texts(records: &[DocumentRecord]) -> BTreeMap<u64, String> {
        records.iter().map(|r| (r.internal_id, r.text.clone())).collect()
    }
}
