//! Caption and culprit-phrase metrics over decoded instances, plus the
//! λ sweep.

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::infer::{decode_batch, DecodeConfig, DecodeResult};
use crate::logic::hard_aggregate;
use crate::model::{init_params, ModelParams};
use crate::prob::Label;
use crate::train::{train, TrainConfig};

/// Binary confusion counts with Falsified as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, gold: Label, pred: Label) {
        match (gold.is_falsified(), pred.is_falsified()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// Zero when nothing is predicted Falsified.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Culprit detection over decoded phrase slots. Phrases removed by
/// truncation are excluded from every count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_phrases: usize,
    pub n_truncated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_instances: usize,
    pub caption_accuracy: f64,
    /// Precision, recall and F1 treat Falsified as the positive class.
    pub caption_precision: f64,
    pub caption_recall: f64,
    pub caption_f1: f64,
    /// Absent when no instance carries gold phrase labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase: Option<PhraseMetrics>,
    /// Fraction of instances whose phrase labels imply their caption label.
    pub logic_consistency_rate: f64,
    pub convergence_rate: f64,
    pub mean_iterations: f64,
}

/// Scores decode results against the gold labels of `instances`, pairing
/// them by position.
pub fn score(instances: &[Instance], results: &[DecodeResult]) -> Result<MetricsReport> {
    if instances.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if instances.len() != results.len() {
        return Err(Error::DimensionMismatch {
            what: "decode results".into(),
            expected: instances.len(),
            got: results.len(),
        });
    }
    let mut caption = Confusion::default();
    let mut phrase = Confusion::default();
    let mut has_gold = false;
    let mut n_truncated = 0;
    let mut consistent = 0;
    let mut converged = 0;
    let mut iterations = 0;
    for (inst, res) in instances.iter().zip(results) {
        if inst.id != res.id {
            return Err(Error::MismatchedInstance {
                instance_id: inst.id.clone(),
                result_id: res.id.clone(),
            });
        }
        caption.add(inst.label, res.y_hat);
        if let Some(gold) = &inst.gold_phrase_labels {
            has_gold = true;
            for (g, p) in gold.iter().zip(&res.z_hat) {
                phrase.add(*g, *p);
            }
            n_truncated += gold.len().saturating_sub(res.z_hat.len());
        }
        if hard_aggregate(&res.z_hat)? == res.y_hat {
            consistent += 1;
        }
        converged += usize::from(res.converged);
        iterations += res.n_iters;
    }
    let n = instances.len();
    Ok(MetricsReport {
        n_instances: n,
        caption_accuracy: caption.accuracy(),
        caption_precision: caption.precision(),
        caption_recall: caption.recall(),
        caption_f1: caption.f1(),
        phrase: has_gold.then(|| PhraseMetrics {
            precision: phrase.precision(),
            recall: phrase.recall(),
            f1: phrase.f1(),
            n_phrases: phrase.total(),
            n_truncated,
        }),
        logic_consistency_rate: ratio(consistent, n),
        convergence_rate: ratio(converged, n),
        mean_iterations: iterations as f64 / n as f64,
    })
}

pub fn evaluate(params: &ModelParams, dataset: &[Instance], cfg: &DecodeConfig) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    score(dataset, &decode_batch(params, dataset, cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub caption_accuracy: f64,
    pub phrase_f1: Option<f64>,
    pub logic_consistency_rate: f64,
}

/// Trains one model per λ from the same initialization and evaluates each
/// on `test`.
pub fn sweep(
    train_set: &[Instance],
    test_set: &[Instance],
    lambdas: &[f64],
    model: &crate::config::ModelConfig,
    train_cfg: &TrainConfig,
    decode_cfg: &DecodeConfig,
) -> Result<Vec<SweepRow>> {
    let d = train_set.first().ok_or(Error::EmptyDataset)?.dim();
    let init = init_params(model.seed, d, model.h, model.max_phrases)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let cfg = TrainConfig { lambda, ..train_cfg.clone() };
            let (params, _) = train(&init, train_set, &cfg)?;
            let m = evaluate(&params, test_set, decode_cfg)?;
            Ok(SweepRow {
                lambda,
                caption_accuracy: m.caption_accuracy,
                phrase_f1: m.phrase.map(|p| p.f1),
                logic_consistency_rate: m.logic_consistency_rate,
            })
        })
        .collect()
}
