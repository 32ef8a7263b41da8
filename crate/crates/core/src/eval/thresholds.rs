use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_doc_count, check_ordinals, check_scores, EvalError, LabelSet};

/// Per-label decision thresholds `τ ∈ [0,1]^L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EvalError> {
        if let Some((label, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(EvalError::BadThreshold { label, value });
        }
        Ok(ThresholdVector(values))
    }

    pub fn uniform(labels: usize, value: f64) -> Self {
        ThresholdVector(vec![value; labels])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub max_sweeps: usize,
    /// Starting threshold for every label; also kept as a candidate.
    pub fallback: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            max_sweeps: 5,
            fallback: 0.5,
        }
    }
}

/// Label `i` is predicted iff `score_i ≥ τ_i`.
pub fn apply_thresholds(scores: &[Vec<f64>], thresholds: &ThresholdVector) -> Result<Vec<LabelSet>, EvalError> {
    check_scores(scores, thresholds.len())?;
    Ok(scores
        .iter()
        .map(|row| {
            row.iter()
                .zip(thresholds.values())
                .enumerate()
                .filter(|(_, (s, t))| s >= t)
                .map(|(i, _)| i)
                .collect()
        })
        .collect())
}

/// `2·TP / (2·TP + FP + FN)`, 0 when nothing is predicted or relevant.
pub fn micro_f_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

/// Thresholds worth trying for one label's scores, ascending: the minimum score
/// (predict everything), midpoints between consecutive distinct scores, and a
/// value above the maximum (predict nothing) when one fits in `[0,1]`.
pub fn candidate_thresholds(column: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = column.iter().copied().filter(|v| v.is_finite()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let Some((&lo, &hi)) = distinct.first().zip(distinct.last()) else {
        return Vec::new();
    };
    let mut out = vec![lo.clamp(0.0, 1.0)];
    out.extend(distinct.windows(2).map(|w| ((w[0] + w[1]) / 2.0).clamp(0.0, 1.0)));
    if hi < 1.0 {
        out.push((hi + 1.0) / 2.0);
    }
    out.dedup();
    out
}

/// Exact `(2·TP, 2·TP + FP + FN)` pair so candidates compare without rounding.
#[derive(Debug, Clone, Copy)]
struct MicroF {
    num: u64,
    den: u64,
}

impl MicroF {
    fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        MicroF {
            num: 2 * tp,
            den: 2 * tp + fp + fn_,
        }
    }

    fn cmp(&self, other: &MicroF) -> Ordering {
        let a = self.num as u128 * other.den.max(1) as u128;
        let b = other.num as u128 * self.den.max(1) as u128;
        a.cmp(&b)
    }
}

/// One label's scores sorted ascending, with suffix counts of gold/non-gold.
struct LabelColumn {
    sorted: Vec<f64>,
    gold_suffix: Vec<u64>,
    gold_total: u64,
}

impl LabelColumn {
    fn new(scores: &[Vec<f64>], gold: &[LabelSet], label: usize) -> Self {
        let mut pairs: Vec<(f64, bool)> = scores
            .iter()
            .zip(gold)
            .map(|(row, g)| (row[label], g.contains(&label)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut gold_suffix = vec![0u64; pairs.len() + 1];
        for i in (0..pairs.len()).rev() {
            gold_suffix[i] = gold_suffix[i + 1] + pairs[i].1 as u64;
        }
        LabelColumn {
            gold_total: gold_suffix[0],
            sorted: pairs.into_iter().map(|p| p.0).collect(),
            gold_suffix,
        }
    }

    /// `(tp, fp, fn)` when predicting every score `≥ tau`.
    fn counts(&self, tau: f64) -> (u64, u64, u64) {
        let start = self.sorted.partition_point(|&s| s < tau);
        let predicted = (self.sorted.len() - start) as u64;
        let tp = self.gold_suffix[start];
        (tp, predicted - tp, self.gold_total - tp)
    }
}

/// Per-label thresholds maximizing corpus micro-F by coordinate ascent.
///
/// Every label starts at `options.fallback`. Each sweep visits labels in ordinal
/// order and moves a label to the candidate that maximizes micro-F with the
/// other labels held fixed. Among equally good candidates, data-derived ones
/// beat the fallback value and larger thresholds beat smaller ones. Sweeps stop
/// when one brings no strict improvement, or after `options.max_sweeps`.
pub fn tune_thresholds(
    scores: &[Vec<f64>],
    gold: &[LabelSet],
    options: TuneOptions,
) -> Result<ThresholdVector, EvalError> {
    check_doc_count("gold sets", scores.len(), gold.len())?;
    let labels = scores.first().ok_or(EvalError::Empty)?.len();
    check_scores(scores, labels)?;
    check_ordinals(gold, labels)?;

    let columns: Vec<LabelColumn> = (0..labels).map(|l| LabelColumn::new(scores, gold, l)).collect();
    let candidates: Vec<Vec<f64>> = (0..labels)
        .map(|l| candidate_thresholds(&scores.iter().map(|r| r[l]).collect::<Vec<_>>()))
        .collect();

    let mut tau = vec![options.fallback; labels];
    let mut counts: Vec<(u64, u64, u64)> = columns.iter().map(|c| c.counts(options.fallback)).collect();
    let mut totals = counts.iter().fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));

    for _ in 0..options.max_sweeps {
        let before = MicroF::new(totals.0, totals.1, totals.2);
        for l in 0..labels {
            let (tp, fp, fn_) = counts[l];
            let rest = (totals.0 - tp, totals.1 - fp, totals.2 - fn_);
            let score_of = |c: (u64, u64, u64)| MicroF::new(rest.0 + c.0, rest.1 + c.1, rest.2 + c.2);

            let mut best_tau = options.fallback;
            let mut best_counts = columns[l].counts(options.fallback);
            let mut best = score_of(best_counts);
            let mut best_is_fallback = true;
            for &cand in &candidates[l] {
                let c = columns[l].counts(cand);
                let f = score_of(c);
                let better = match f.cmp(&best) {
                    Ordering::Greater => true,
                    Ordering::Equal => best_is_fallback || cand > best_tau,
                    Ordering::Less => false,
                };
                if better {
                    best = f;
                    best_tau = cand;
                    best_counts = c;
                    best_is_fallback = false;
                }
            }
            tau[l] = best_tau;
            counts[l] = best_counts;
            totals = (rest.0 + best_counts.0, rest.1 + best_counts.1, rest.2 + best_counts.2);
        }
        let after = MicroF::new(totals.0, totals.1, totals.2);
        if after.cmp(&before) != Ordering::Greater {
            break;
        }
    }
    ThresholdVector::new(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> LabelSet {
        v.iter().copied().collect()
    }

    #[test]
    fn apply_is_closed_at_threshold() {
        let t = ThresholdVector::new(vec![0.5, 0.6]).unwrap();
        let p = apply_thresholds(&[vec![0.6, 0.6], vec![0.5, 0.2]], &t).unwrap();
        assert_eq!(p, vec![set(&[0, 1]), set(&[0])]);
        let none = apply_thresholds(&[vec![0.99, 0.4]], &ThresholdVector::uniform(2, 1.0)).unwrap();
        assert!(none[0].is_empty());
    }

    #[test]
    fn threshold_vector_validates_range() {
        assert!(ThresholdVector::new(vec![0.0, 1.0]).is_ok());
        assert!(ThresholdVector::new(vec![1.2]).is_err());
        assert!(ThresholdVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn single_label_returns_midpoint() {
        let t = tune_thresholds(&[vec![0.2], vec![0.7]], &[set(&[]), set(&[0])], TuneOptions::default()).unwrap();
        assert!((t.values()[0] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn all_positive_label_goes_to_min_score() {
        let scores = vec![vec![0.6], vec![0.9], vec![0.8]];
        let gold = vec![set(&[0]); 3];
        let t = tune_thresholds(&scores, &gold, TuneOptions::default()).unwrap();
        assert!(t.values()[0] <= 0.6);
    }

    #[test]
    fn candidates_cover_every_partition() {
        let c = candidate_thresholds(&[0.2, 0.7, 0.2]);
        assert_eq!(c.len(), 3);
        for (got, want) in c.iter().zip([0.2, 0.45, 0.85]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(candidate_thresholds(&[1.0]), vec![1.0]);
        assert!(candidate_thresholds(&[]).is_empty());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(tune_thresholds(&[], &[], TuneOptions::default()), Err(EvalError::Empty));
    }

    #[test]
    fn micro_f_counts() {
        assert_eq!(micro_f_from_counts(0, 0, 0), 0.0);
        assert!((micro_f_from_counts(2, 1, 1) - 2.0 / 3.0).abs() < 1e-15);
    }
}
