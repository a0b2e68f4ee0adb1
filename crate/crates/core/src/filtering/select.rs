use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::generation::QAPair;
use crate::sampler::QuestionType;

/// Removes `floor(fraction * n)` pairs from each end of the score order.
///
/// Ties are ordered by pair id. Survivors keep their input order.
pub fn trim_extremes(scored: Vec<(QAPair, f64)>, fraction: f64) -> Result<Vec<QAPair>, FilterError> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(FilterError::BadFraction(fraction));
    }
    let n = scored.len();
    let cut = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .1
            .total_cmp(&scored[b].1)
            .then_with(|| scored[a].0.id.cmp(&scored[b].0.id))
    });
    let mut keep = vec![false; n];
    for &i in &order[cut..n - cut] {
        keep[i] = true;
    }
    Ok(scored
        .into_iter()
        .zip(keep)
        .filter_map(|((qa, _), k)| k.then_some(qa))
        .collect())
}

/// The released question set: the same number of pairs for every type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub pairs: BTreeMap<QuestionType, Vec<QAPair>>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.pairs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pairs in release order: by question type, then selection order.
    pub fn iter(&self) -> impl Iterator<Item = &QAPair> {
        self.pairs.values().flatten()
    }
}

/// Draws `quota` pairs per question type, uniformly without replacement.
///
/// Every type must have at least `quota` pairs; otherwise the error lists
/// the deficient types. Pools are sorted by id before sampling so the
/// selection depends only on pool contents and `seed`.
pub fn finalize_testset(
    mut pools: BTreeMap<QuestionType, Vec<QAPair>>,
    quota: usize,
    seed: u64,
) -> Result<TestSet, FilterError> {
    let deficient: Vec<(QuestionType, usize)> = QuestionType::ALL
        .into_iter()
        .map(|t| (t, pools.get(&t).map_or(0, Vec::len)))
        .filter(|(_, n)| *n < quota)
        .collect();
    if !deficient.is_empty() {
        return Err(FilterError::QuotaShortfall { quota, deficient });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = BTreeMap::new();
    for qtype in QuestionType::ALL {
        let mut pool = pools.remove(&qtype).unwrap_or_default();
        pool.sort_by_key(|qa| qa.id);
        let mut chosen = rand::seq::index::sample(&mut rng, pool.len(), quota).into_vec();
        chosen.sort_unstable();
        let mut slots: Vec<Option<QAPair>> = pool.into_iter().map(Some).collect();
        let selected = chosen.into_iter().filter_map(|i| slots[i].take()).collect();
        pairs.insert(qtype, selected);
    }
    Ok(TestSet { pairs })
}
