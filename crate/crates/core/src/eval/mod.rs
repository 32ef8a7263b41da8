//! Bipartition and ranking metrics for multi-label indexing, plus per-label
//! decision-threshold tuning.
//!
//! Label sets are ordinal sets (`BTreeSet<usize>`); scores are dense per-document
//! vectors of length `L`. Conventions for zero denominators:
//!
//! * a document with an empty prediction set contributes precision 0;
//! * a document with an empty gold set is skipped when averaging recall
//!   (example-based and `R@k`), but still counts for `P@k` with zero hits;
//! * labels with `TP = FP = FN = 0` are left out of macro averages, and the
//!   number left out is reported.

mod metrics;
mod thresholds;

pub use metrics::{
    example_based, label_based, ranked, top_k, ExampleBased, LabelBased, MetricsReport, Ranked,
    DEFAULT_KS,
};
pub use thresholds::{
    apply_thresholds, candidate_thresholds, micro_f_from_counts, tune_thresholds, ThresholdVector,
    TuneOptions,
};

use std::collections::BTreeSet;

use thiserror::Error;

/// Ordinals of the labels assigned to (or predicted for) one document.
pub type LabelSet = BTreeSet<usize>;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{what}: expected {expected} documents, found {found}")]
    DocumentCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("label ordinal {ordinal} out of range for {labels} labels")]
    LabelOutOfRange { ordinal: usize, labels: usize },
    #[error("document {doc}: expected {expected} scores, found {found}")]
    ScoreWidth {
        doc: usize,
        expected: usize,
        found: usize,
    },
    #[error("threshold {value} for label {label} is not a finite value in [0, 1]")]
    BadThreshold { label: usize, value: f64 },
    #[error("no documents to tune on")]
    Empty,
}

pub(crate) fn check_doc_count(what: &'static str, expected: usize, found: usize) -> Result<(), EvalError> {
    if expected != found {
        return Err(EvalError::DocumentCount {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

pub(crate) fn check_ordinals(sets: &[LabelSet], labels: usize) -> Result<(), EvalError> {
    for set in sets {
        if let Some(&ordinal) = set.iter().next_back().filter(|&&o| o >= labels) {
            return Err(EvalError::LabelOutOfRange { ordinal, labels });
        }
    }
    Ok(())
}

pub(crate) fn check_scores(scores: &[Vec<f64>], labels: usize) -> Result<(), EvalError> {
    for (doc, row) in scores.iter().enumerate() {
        if row.len() != labels {
            return Err(EvalError::ScoreWidth {
                doc,
                expected: labels,
                found: row.len(),
            });
        }
    }
    Ok(())
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}
