use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EncodedDoc, Model, ModelError};
use crate::eval::{apply_thresholds, label_based, LabelSet, ThresholdVector};
use crate::tensor::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub train_loss: f64,
    pub learning_rate: f64,
    /// Micro-F on the validation split at threshold 0.5.
    pub validation_micro_f: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (the best validation epoch, or the last).
    pub best_epoch: Option<usize>,
    pub best_validation_micro_f: Option<f64>,
    pub stopped_early: bool,
}

/// Validation micro-F at a uniform 0.5 threshold.
pub fn validation_micro_f(model: &Model, docs: &[EncodedDoc]) -> Result<f64, ModelError> {
    let scores = model.predict(docs)?;
    let labels = model.label_count();
    let pred = apply_thresholds(&scores, &ThresholdVector::uniform(labels, 0.5))
        .map_err(|e| ModelError::Config(e.to_string()))?;
    let gold: Vec<LabelSet> = docs.iter().map(|d| d.labels.clone()).collect();
    let lb = label_based(&gold, &pred, labels).map_err(|e| ModelError::Config(e.to_string()))?;
    Ok(lb.micro_f1)
}

/// Minibatch Adam on `train_docs`. The learning rate decays after every
/// epoch. With a validation split, training stops after `patience` epochs
/// without a micro-F gain and the best epoch's parameters are restored.
pub fn train(model: &mut Model, train_docs: &[EncodedDoc], validation: &[EncodedDoc]) -> Result<TrainReport, ModelError> {
    if train_docs.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let labels = model.label_count();
    for doc in train_docs.iter().chain(validation) {
        if let Some(&ordinal) = doc.labels.iter().next_back().filter(|&&o| o >= labels) {
            return Err(ModelError::LabelOutOfRange { ordinal, labels });
        }
    }
    let config = model.config.clone();
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        decay: config.decay,
        ..AdamConfig::default()
    };
    let mut adam = {
        let named = model.params.named();
        let refs: Vec<_> = named.iter().map(|(_, t)| *t).collect();
        AdamState::new(adam_config, &refs)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    let mut report = TrainReport::default();
    let mut best: Option<(f64, crate::model::ModelParams)> = None;
    let mut since_best = 0;
    let mut step_seed = config.seed;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<EncodedDoc> = chunk.iter().map(|&i| train_docs[i].clone()).collect();
            step_seed = step_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let (loss, grads) = model.loss_and_gradients(&batch, true, step_seed)?;
            adam.step(&mut model.params.tensors_mut(), &grads.0)?;
            total += loss;
            batches += 1;
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / batches as f64,
            learning_rate: adam.learning_rate(),
            validation_micro_f: if validation.is_empty() {
                None
            } else {
                Some(validation_micro_f(model, validation)?)
            },
        };
        adam.end_epoch();
        let val = stats.validation_micro_f;
        report.epochs.push(stats);
        if let Some(f) = val {
            if best.as_ref().is_none_or(|(b, _)| f > *b) {
                best = Some((f, model.params.clone()));
                report.best_epoch = Some(epoch);
                report.best_validation_micro_f = Some(f);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience.max(1) {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    match best {
        Some((_, params)) => model.params = params,
        None => report.best_epoch = report.epochs.last().map(|e| e.epoch),
    }
    if !model.params.is_finite() {
        return Err(ModelError::Config("training diverged to non-finite parameters".into()));
    }
    Ok(report)
}
