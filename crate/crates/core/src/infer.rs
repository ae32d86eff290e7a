//! Iterative decoding: start from random phrase marginals, then alternate
//! `y ← p(y | z, x)` and `z ← q(z | y, x)` until the thresholded labels stop
//! changing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::model::{build_features, posterior_q, predict_p, FeatureBundle, ModelParams};
use crate::prob::{Label, VeracityDist};
use crate::seed;

const DECODE_STREAM: u64 = 0xDEC0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub max_iters: usize,
    pub seed: u64,
    /// `p_true >= tie_threshold` decodes to Pristine.
    pub tie_threshold: f64,
    /// Condition the posterior on the thresholded caption label instead of
    /// the caption distribution.
    pub hard_conditioning: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_iters: 10,
            seed: 0,
            tie_threshold: 0.5,
            hard_conditioning: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.tie_threshold) {
            return Err(Error::config("tie_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub y: VeracityDist,
    /// One entry per slot; padded slots are Pristine.
    pub z: Vec<VeracityDist>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub initial_z: Vec<VeracityDist>,
    pub iterations: Vec<DecodeStep>,
    pub converged: bool,
    pub n_iters: usize,
}

/// One decoded instance. Serializes to the decode-results JSONL schema; the
/// trace stays in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub id: String,
    pub y_hat: Label,
    /// Pristine probability of the final caption distribution.
    pub y_prob: f64,
    /// Labels for the real (decoded) phrase slots.
    pub z_hat: Vec<Label>,
    /// Pristine probabilities for the real phrase slots.
    pub z_probs: Vec<f64>,
    pub n_iters: usize,
    pub converged: bool,
    #[serde(skip)]
    pub trace: DecodeTrace,
}

fn hard(z: &[VeracityDist], mask: &[bool], t: f64) -> Vec<Label> {
    z.iter().zip(mask).filter(|(_, &m)| m).map(|(d, _)| d.threshold(t)).collect()
}

/// Decodes precomputed features. Randomness comes from `(cfg.seed, id)`.
pub fn decode_bundle(params: &ModelParams, bundle: &FeatureBundle, id: &str, cfg: &DecodeConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    params.check_bundle(bundle)?;
    let t = cfg.tie_threshold;
    let mut rng = seed::stream_for_id(cfg.seed, DECODE_STREAM, id);
    let initial_z: Vec<VeracityDist> = bundle
        .mask
        .iter()
        .map(|&real| {
            if real {
                VeracityDist::from_valid(rng.random::<f64>())
            } else {
                VeracityDist::PRISTINE
            }
        })
        .collect();

    let mut z = initial_z.clone();
    let mut prev_z = hard(&z, &bundle.mask, t);
    let mut prev_y: Option<Label> = None;
    let mut iterations = Vec::with_capacity(cfg.max_iters);
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let y = predict_p(params, &z, bundle)?;
        let y_label = y.threshold(t);
        let cond = if cfg.hard_conditioning { y_label.into() } else { y };
        z = posterior_q(params, cond, bundle)?;
        let z_labels = hard(&z, &bundle.mask, t);
        converged = z_labels == prev_z && prev_y.is_none_or(|p| p == y_label);
        iterations.push(DecodeStep { y, z: z.clone() });
        prev_z = z_labels;
        prev_y = Some(y_label);
        if converged {
            break;
        }
    }

    let last = iterations.last().expect("max_iters >= 1");
    let z_probs = last
        .z
        .iter()
        .zip(&bundle.mask)
        .filter(|(_, &m)| m)
        .map(|(d, _)| d.p_true())
        .collect();
    Ok(DecodeResult {
        id: id.to_string(),
        y_hat: last.y.threshold(t),
        y_prob: last.y.p_true(),
        z_hat: prev_z,
        z_probs,
        n_iters: iterations.len(),
        converged,
        trace: DecodeTrace {
            initial_z,
            n_iters: iterations.len(),
            iterations,
            converged,
        },
    })
}

/// Gold labels on `inst` are never read.
pub fn decode(params: &ModelParams, inst: &Instance, cfg: &DecodeConfig) -> Result<DecodeResult> {
    let bundle = build_features(inst, params.max_phrases)?;
    decode_bundle(params, &bundle, &inst.id, cfg)
}

/// Element-wise [`decode`]; output order follows input order.
pub fn decode_batch(params: &ModelParams, instances: &[Instance], cfg: &DecodeConfig) -> Result<Vec<DecodeResult>> {
    instances.iter().map(|inst| decode(params, inst, cfg)).collect()
}
