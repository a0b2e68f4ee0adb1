use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DatasetError;
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub source: String,
    pub text: String,
    /// Unix seconds.
    pub fetched_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub internal_id: u64,
    pub text: String,
    pub source: String,
    pub fetched_at: u64,
    pub content_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: Vec<DocumentRecord>,
    /// (batch index, reason) per rejected item.
    pub rejected: Vec<(usize, String)>,
    pub duplicates: usize,
}

/// Whitespace runs collapsed to one space, ends trimmed.
pub fn default_cleaner(raw: &str) -> String {
    text::collapse_whitespace(raw)
}

/// Hex sha256 of the cleaned text.
pub fn content_hash(cleaned: &str) -> String {
    hex::encode(Sha256::digest(cleaned.as_bytes()))
}

/// Cleans and hashes a batch. Internal ids are assigned from `next_id` in
/// batch order; later copies of an already seen hash are dropped.
pub fn ingest_documents(
    batch: &[RawDocument],
    cleaner: &(dyn Fn(&str) -> String + Sync),
    next_id: u64,
) -> IngestReport {
    let cleaned: Vec<(String, String)> = batch
        .par_iter()
        .map(|doc| {
            let text = cleaner(&doc.text);
            let hash = content_hash(&text);
            (text, hash)
        })
        .collect();
    let mut report = IngestReport::default();
    let mut seen = BTreeSet::new();
    let mut id = next_id;
    for (i, (doc, (text, hash))) in batch.iter().zip(cleaned).enumerate() {
        if text.is_empty() {
            report
                .rejected
                .push((i, format!("{}: empty after cleaning", doc.source)));
            continue;
        }
        if !seen.insert(hash.clone()) {
            report.duplicates += 1;
            continue;
        }
        report.records.push(DocumentRecord {
            internal_id: id,
            text,
            source: doc.source.clone(),
            fetched_at: doc.fetched_at,
            content_hash: hash,
        });
        id += 1;
    }
    report
}

/// Records whose hash is not in `prev`, in input order.
pub fn diff_corpus(prev: &BTreeSet<String>, current: &[DocumentRecord]) -> Vec<DocumentRecord> {
    current
        .iter()
        .filter(|r| !prev.contains(&r.content_hash))
        .cloned()
        .collect()
}

/// Seeded random bijection from internal ids onto `0..n`.
pub fn assign_public_ids(records: &[DocumentRecord], seed: u64) -> Result<BTreeMap<u64, u64>, DatasetError> {
    let mut internal: Vec<u64> = records.iter().map(|r| r.internal_id).collect();
    internal.sort_unstable();
    if let Some(w) = internal.windows(2).find(|w| w[0] == w[1]) {
        return Err(DatasetError::DuplicateInternalId(w[0]));
    }
    let mut public: Vec<u64> = (0..internal.len() as u64).collect();
    public.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(internal.into_iter().zip(public).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(text: &str) -> RawDocument {
        RawDocument {
            source: "test".into(),
            text: text.into(),
            fetched_at: 0,
        }
    }

    fn records(n: u64) -> Vec<DocumentRecord> {
        (0..n)
            .map(|i| DocumentRecord {
                internal_id: i * 3 + 10,
                text: format!("doc {i}"),
                source: "s".into(),
                fetched_at: 0,
                content_hash: content_hash(&format!("doc {i}")),
            })
            .collect()
    }

    #[test]
    fn identical_documents_collapse() {
        let r = ingest_documents(&[raw("same text"), raw("same text")], &default_cleaner, 0);
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn trailing_whitespace_does_not_change_hash() {
        let r = ingest_documents(&[raw("a  b\n"), raw("x"), raw("a b")], &default_cleaner, 5);
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.records[0].content_hash, content_hash("a b"));
        assert_eq!(r.records.iter().map(|d| d.internal_id).collect::<Vec<_>>(), [5, 6]);
    }

    #[test]
    fn empty_documents_are_rejected_with_index() {
        let r = ingest_documents(&[raw("ok"), raw("  \n\t")], &default_cleaner, 0);
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.rejected[0].0, 1);
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            content_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn diff_examples() {
        let all = records(5);
        let old: BTreeSet<String> = all[..3].iter().map(|r| r.content_hash.clone()).collect();
        assert!(diff_corpus(&old, &all[..3]).is_empty());
        assert_eq!(diff_corpus(&old, &all), all[3..].to_vec());
        let one: BTreeSet<String> = all[1..].iter().map(|r| r.content_hash.clone()).collect();
        assert_eq!(diff_corpus(&one, &all).len(), 1);
    }

    #[test]
    fn public_ids_single_and_deterministic() {
        assert_eq!(assign_public_ids(&records(1), 3).unwrap(), BTreeMap::from([(10, 0)]));
        assert_eq!(
            assign_public_ids(&records(50), 9).unwrap(),
            assign_public_ids(&records(50), 9).unwrap()
        );
        let mut dup = records(3);
        dup[2].internal_id = dup[0].internal_id;
        assert!(matches!(
            assign_public_ids(&dup, 0),
            Err(DatasetError::DuplicateInternalId(10))
        ));
    }

    fn spearman(pairs: &[(u64, u64)]) -> f64 {
        // Both sides are permutations of ranks here, so the closed form applies.
        let n = pairs.len() as f64;
        let d2: f64 = pairs.iter().map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn public_ids_do_not_track_internal_order() {
        let map = assign_public_ids(&records(1000), 7).unwrap();
        let ranked: Vec<(u64, u64)> = map.values().enumerate().map(|(rank, p)| (rank as u64, *p)).collect();
        assert!(spearman(&ranked).abs() < 0.5);
    }

    proptest! {
        #[test]
        fn diff_partitions_current(n in 0u64..20, cut in 0usize..20) {
            let all = records(n);
            let cut = cut.min(all.len());
            let prev: BTreeSet<String> = all[..cut].iter().map(|r| r.content_hash.clone()).collect();
            let inc = diff_corpus(&prev, &all);
            let kept: Vec<DocumentRecord> = all.iter().filter(|r| prev.contains(&r.content_hash)).cloned().collect();
            prop_assert_eq!(inc.len() + kept.len(), all.len());
            prop_assert!(inc.iter().all(|r| !prev.contains(&r.content_hash)));
        }

        #[test]
        fn public_ids_are_a_bijection(n in 1u64..200, seed in any::<u64>()) {
            let map = assign_public_ids(&records(n), seed).unwrap();
            let publics: BTreeSet<u64> = map.values().copied().collect();
            prop_assert_eq!(publics, (0..n).collect::<BTreeSet<u64>>());
        }
    }
}
