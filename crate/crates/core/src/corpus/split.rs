use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pmid_sort_key, ArticleRecord, CorpusError, Section};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, validation and test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Result<Self, CorpusError> {
        let valid = ratios.iter().all(|r| r.is_finite() && *r >= 0.0)
            && (ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if !valid {
            return Err(CorpusError::SplitRatios(ratios));
        }
        Ok(SplitSpec { ratios, seed })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<ArticleRecord>,
    pub validation: Vec<ArticleRecord>,
    pub test: Vec<ArticleRecord>,
}

impl Split {
    pub fn parts(&self) -> [(&'static str, &[ArticleRecord]); 3] {
        [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }

    /// One PMID per line, ascending.
    pub fn manifest(part: &[ArticleRecord]) -> String {
        let mut ids: Vec<&str> = part.iter().map(|r| r.pmid.as_str()).collect();
        ids.sort_by_key(|p| pmid_sort_key(p));
        ids.iter().map(|p| format!("{p}\n")).collect()
    }
}

/// Records having title, abstract, introduction, methods, results and discussion.
pub fn select_complete(records: Vec<ArticleRecord>) -> Vec<ArticleRecord> {
    records
        .into_iter()
        .filter(|r| Section::CORE.iter().all(|&s| r.sections.has(s)))
        .collect()
}

/// Largest-remainder apportionment of `n` items; ties go to the earlier part.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    // ratios may sum to slightly above 1
    while counts.iter().sum::<usize>() > n {
        let i = (0..3).rev().find(|&i| counts[i] > 0).expect("positive count");
        counts[i] -= 1;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Splits each publication year separately: records are put in PMID order,
/// shuffled with a seeded ChaCha8 generator, then cut by largest remainder.
pub fn stratified_split(records: Vec<ArticleRecord>, spec: &SplitSpec) -> Result<Split, CorpusError> {
    let spec = SplitSpec::new(spec.ratios, spec.seed)?;
    let mut by_year: BTreeMap<i32, Vec<ArticleRecord>> = BTreeMap::new();
    for r in records {
        by_year.entry(r.year).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split::default();
    for (_, mut group) in by_year {
        group.sort_by(|a, b| pmid_sort_key(&a.pmid).cmp(&pmid_sort_key(&b.pmid)));
        group.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(group.len(), &spec.ratios);
        let mut rest = group.split_off(n_train);
        let test = rest.split_off(n_val);
        split.train.extend(group);
        split.validation.extend(rest);
        split.test.extend(test);
    }
    Ok(split)
}
