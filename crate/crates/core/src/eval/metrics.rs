use serde::ser::{Serialize, SerializeMap, Serializer};

use super::{check_doc_count, check_ordinals, check_scores, harmonic_mean, EvalError, LabelSet};

/// Cut-offs reported for `P@k` / `R@k`.
pub const DEFAULT_KS: [usize; 5] = [1, 3, 5, 10, 15];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleBased {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelBased {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Labels with no true positives, false positives or false negatives.
    pub excluded_labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    /// `(k, P@k, R@k)` in the order the cut-offs were requested.
    pub at: Vec<(usize, f64, f64)>,
}

impl Ranked {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.at.iter().find(|e| e.0 == k).map(|e| e.1)
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.at.iter().find(|e| e.0 == k).map(|e| e.2)
    }
}

/// Per-document precision and recall averaged over documents; F is the harmonic
/// mean of the two averages.
pub fn example_based(gold: &[LabelSet], pred: &[LabelSet]) -> Result<ExampleBased, EvalError> {
    check_doc_count("predictions", gold.len(), pred.len())?;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut recall_docs = 0usize;
    for (g, p) in gold.iter().zip(pred) {
        let hits = g.intersection(p).count() as f64;
        if !p.is_empty() {
            precision_sum += hits / p.len() as f64;
        }
        if !g.is_empty() {
            recall_sum += hits / g.len() as f64;
            recall_docs += 1;
        }
    }
    let precision = if gold.is_empty() {
        0.0
    } else {
        precision_sum / gold.len() as f64
    };
    let recall = if recall_docs == 0 {
        0.0
    } else {
        recall_sum / recall_docs as f64
    };
    Ok(ExampleBased {
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
    })
}

/// Micro and macro precision/recall/F over `labels` labels.
pub fn label_based(gold: &[LabelSet], pred: &[LabelSet], labels: usize) -> Result<LabelBased, EvalError> {
    check_doc_count("predictions", gold.len(), pred.len())?;
    check_ordinals(gold, labels)?;
    check_ordinals(pred, labels)?;
    let mut tp = vec![0u64; labels];
    let mut fp = vec![0u64; labels];
    let mut fn_ = vec![0u64; labels];
    for (g, p) in gold.iter().zip(pred) {
        for &l in p {
            if g.contains(&l) {
                tp[l] += 1;
            } else {
                fp[l] += 1;
            }
        }
        for &l in g.difference(p) {
            fn_[l] += 1;
        }
    }
    let (t, f, n): (u64, u64, u64) = (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let micro_precision = ratio(t, t + f);
    let micro_recall = ratio(t, t + n);

    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut included = 0usize;
    for l in 0..labels {
        if tp[l] + fp[l] + fn_[l] == 0 {
            continue;
        }
        included += 1;
        p_sum += ratio(tp[l], tp[l] + fp[l]);
        r_sum += ratio(tp[l], tp[l] + fn_[l]);
    }
    let (macro_precision, macro_recall) = if included == 0 {
        (0.0, 0.0)
    } else {
        (p_sum / included as f64, r_sum / included as f64)
    };
    Ok(LabelBased {
        micro_precision,
        micro_recall,
        micro_f1: harmonic_mean(micro_precision, micro_recall),
        macro_precision,
        macro_recall,
        macro_f1: harmonic_mean(macro_precision, macro_recall),
        excluded_labels: labels - included,
    })
}

/// Label ordinals sorted by descending score, ties broken by ascending ordinal,
/// truncated to `k`.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `P@k` and `R@k` from raw scores.
pub fn ranked(gold: &[LabelSet], scores: &[Vec<f64>], ks: &[usize]) -> Result<Ranked, EvalError> {
    check_doc_count("score rows", gold.len(), scores.len())?;
    let labels = scores.first().map_or(0, Vec::len);
    check_scores(scores, labels)?;
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let mut p_sum = vec![0.0; ks.len()];
    let mut r_sum = vec![0.0; ks.len()];
    let mut recall_docs = 0usize;
    for (g, row) in gold.iter().zip(scores) {
        let order = top_k(row, max_k);
        if !g.is_empty() {
            recall_docs += 1;
        }
        for (slot, &k) in ks.iter().enumerate() {
            let hits = order.iter().take(k).filter(|l| g.contains(l)).count() as f64;
            if k > 0 {
                p_sum[slot] += hits / k as f64;
            }
            if !g.is_empty() {
                r_sum[slot] += hits / g.len() as f64;
            }
        }
    }
    let n = gold.len();
    let at = ks
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            let p = if n == 0 { 0.0 } else { p_sum[slot] / n as f64 };
            let r = if recall_docs == 0 {
                0.0
            } else {
                r_sum[slot] / recall_docs as f64
            };
            (k, p, r)
        })
        .collect();
    Ok(Ranked { at })
}

/// Every reported measure for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub example: ExampleBased,
    pub label: LabelBased,
    pub ranked: Option<Ranked>,
    pub documents: usize,
}

impl MetricsReport {
    /// Bipartition metrics from predicted sets, ranking metrics from scores when given.
    pub fn compute(
        gold: &[LabelSet],
        pred: &[LabelSet],
        scores: Option<&[Vec<f64>]>,
        labels: usize,
    ) -> Result<Self, EvalError> {
        Ok(MetricsReport {
            example: example_based(gold, pred)?,
            label: label_based(gold, pred, labels)?,
            ranked: scores.map(|s| ranked(gold, s, &DEFAULT_KS)).transpose()?,
            documents: gold.len(),
        })
    }

    /// `(name, value)` pairs in report order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("EBF".to_string(), self.example.f1),
            ("EBP".to_string(), self.example.precision),
            ("EBR".to_string(), self.example.recall),
            ("MiF".to_string(), self.label.micro_f1),
            ("MiP".to_string(), self.label.micro_precision),
            ("MiR".to_string(), self.label.micro_recall),
            ("MaF".to_string(), self.label.macro_f1),
            ("MaP".to_string(), self.label.macro_precision),
            ("MaR".to_string(), self.label.macro_recall),
        ];
        if let Some(r) = &self.ranked {
            out.extend(r.at.iter().map(|&(k, p, _)| (format!("P@{k}"), p)));
            out.extend(r.at.iter().map(|&(k, _, rc)| (format!("R@{k}"), rc)));
        }
        out
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let entries = self.entries();
        let mut map = serializer.serialize_map(Some(entries.len() + 2))?;
        for (name, value) in &entries {
            map.serialize_entry(name, value)?;
        }
        map.serialize_entry("documents", &self.documents)?;
        map.serialize_entry("macro_excluded_labels", &self.label.excluded_labels)?;
        map.end()
    }
}
