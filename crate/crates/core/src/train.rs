//! Minibatch Adam over the final loss.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::infer::{decode_bundle, DecodeConfig};
use crate::loss::{compute_loss, LossWeights, Teacher};
use crate::model::{build_features, FeatureBundle, ModelParams};
use crate::prob::DEFAULT_EPS;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub eps_prob: f64,
    /// Treat the logic-rule teacher as a constant target. Off by default:
    /// with a detached teacher the posterior is never tied to the rule and
    /// the latent phrase labels stay uninformative.
    pub detach_teacher: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.5,
            lr: 5e-3,
            batch_size: 64,
            epochs: 30,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            eps_prob: DEFAULT_EPS,
            detach_teacher: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda must lie in [0, 1]"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr must be finite and non-negative"));
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return Err(Error::config("batch_size and epochs must be at least 1"));
        }
        if !open_unit(self.adam_beta1) || !open_unit(self.adam_beta2) {
            return Err(Error::config("adam betas must lie in (0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps must be positive"));
        }
        if !(self.eps_prob > 0.0 && self.eps_prob < 0.5) {
            return Err(Error::config("eps_prob must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Per-epoch means over the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub l_var: Vec<f64>,
    pub l_logic: Vec<f64>,
    pub l_final: Vec<f64>,
    /// Caption accuracy of iterative decoding on the training set after each epoch.
    pub train_accuracy: Vec<f64>,
    pub wall_time_secs: f64,
    pub params_checksum: String,
}

impl TrainReport {
    /// Everything except wall time, which legitimately varies between runs.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        self.l_var == other.l_var
            && self.l_logic == other.l_logic
            && self.l_final == other.l_final
            && self.train_accuracy == other.train_accuracy
            && self.params_checksum == other.params_checksum
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let tensors = params.tensors_mut();
        let grads = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in tensors.into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

fn fill_zero(grad: &mut ModelParams) {
    for t in grad.tensors_mut() {
        t.iter_mut().for_each(|x| *x = 0.0);
    }
}

fn bundles_for(params: &ModelParams, data: &[Instance]) -> Result<Vec<FeatureBundle>> {
    data.iter()
        .map(|inst| {
            let b = build_features(inst, params.max_phrases)?;
            params.check_bundle(&b)?;
            Ok(b)
        })
        .collect()
}

/// Trains a copy of `params`. Output is a pure function of the inputs: the
/// epoch permutation is drawn from `cfg.seed`, and per-epoch means are
/// summed in dataset order.
pub fn train(params: &ModelParams, dataset: &[Instance], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let started = Instant::now();
    let bundles = bundles_for(params, dataset)?;
    let weights = LossWeights::from_lambda(cfg.lambda);
    let decode_cfg = DecodeConfig {
        seed: cfg.seed,
        ..DecodeConfig::default()
    };

    let mut params = params.clone();
    let mut adam = Adam::new(&params);
    let mut grad = params.zeros_like();
    let mut rng = seed::stream(cfg.seed, &[0x7EA1]);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let n = dataset.len() as f64;

    let mut report = TrainReport {
        l_var: Vec::with_capacity(cfg.epochs),
        l_logic: Vec::with_capacity(cfg.epochs),
        l_final: Vec::with_capacity(cfg.epochs),
        train_accuracy: Vec::with_capacity(cfg.epochs),
        wall_time_secs: 0.0,
        params_checksum: String::new(),
    };
    let mut per_instance = vec![(0.0, 0.0, 0.0); dataset.len()];

    let teacher = if cfg.detach_teacher { Teacher::Detached } else { Teacher::Live };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            fill_zero(&mut grad);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let parts = compute_loss(
                    &params,
                    &bundles[i],
                    dataset[i].label,
                    weights,
                    cfg.eps_prob,
                    teacher,
                    Some((&mut grad, scale)),
                )
                .map_err(|e| match e {
                    Error::NonFinite { block } => Error::Divergence { epoch, block },
                    other => other,
                })?;
                per_instance[i] = (parts.var, parts.logic, parts.total);
            }
            adam.step(&mut params, &grad, cfg);
        }
        if let Some(block) = params.first_non_finite() {
            return Err(Error::Divergence { epoch, block: block.to_string() });
        }

        let (mut v, mut l, mut f) = (0.0, 0.0, 0.0);
        for &(a, b, c) in &per_instance {
            v += a;
            l += b;
            f += c;
        }
        let mut correct = 0usize;
        for (inst, bundle) in dataset.iter().zip(&bundles) {
            if decode_bundle(&params, bundle, &inst.id, &decode_cfg)?.y_hat == inst.label {
                correct += 1;
            }
        }
        report.l_var.push(v / n);
        report.l_logic.push(l / n);
        report.l_final.push(f / n);
        report.train_accuracy.push(correct as f64 / n);
    }

    report.wall_time_secs = started.elapsed().as_secs_f64();
    report.params_checksum = params.checksum();
    Ok((params, report))
}
