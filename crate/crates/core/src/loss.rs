//! Training objectives and their analytic gradients.
//!
//! * variational loss: `-log p(y* | z̄, x) + Σ_i KL(q(z_i | y*, x) || p(z_i | x))`,
//!   where `z̄` is the mean-field relaxation (posterior marginals fed to the
//!   predictor through the z embedding mix);
//! * logic loss: `KL(p(y | z̄, x) || teacher)`, teacher = product t-norm of
//!   the posterior marginals (see [`Teacher`] for whether it is detached);
//! * final loss: `(1 - λ) · variational + λ · logic`.

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::model::{build_features, p_input, predict_p, q_input, squash, FeatureBundle, ModelParams};
use crate::prob::{clamp_prob, kl_bernoulli, kl_grad_p, kl_grad_q, Label, VeracityDist, DEFAULT_EPS};

/// Largest real-slot count `enumerate_expectation` accepts.
pub const ENUMERATION_LIMIT: usize = 12;

/// How the distillation target enters the gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Teacher {
    /// Gradient flows into the posterior through the product t-norm.
    Live,
    /// Teacher computed from the posterior but treated as a constant.
    Detached,
    /// Externally supplied constant (already clamped); finite-difference
    /// checks of the detached objective use it.
    Fixed(f64),
}

/// Mixing weights of the two objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub var: f64,
    pub logic: f64,
}

impl LossWeights {
    pub fn from_lambda(lambda: f64) -> Self {
        LossWeights {
            var: 1.0 - lambda,
            logic: lambda,
        }
    }

    pub const VARIATIONAL: LossWeights = LossWeights { var: 1.0, logic: 0.0 };
    pub const LOGIC: LossWeights = LossWeights { var: 0.0, logic: 1.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// `-log p(y* | z̄, x)`.
    pub expectation: f64,
    /// Posterior-to-prior KL summed over real slots.
    pub kl: f64,
    /// `expectation + kl`.
    pub var: f64,
    pub logic: f64,
    /// Weighted combination.
    pub total: f64,
    /// Clamped teacher Pristine mass used as the distillation target.
    pub teacher: f64,
}

struct SlotCache {
    slot: usize,
    prior_act: Vec<f64>,
    prior: f64,
    prior_live: bool,
    q_in: Vec<f64>,
    q_act: Vec<f64>,
    q: f64,
    q_live: bool,
}

/// Evaluates the losses on one feature bundle and, when `grad` is given,
/// accumulates `scale ·` the gradient of `weights`-combined loss into it.
///
/// The teacher is `clamp(Π q_i, eps)`; with [`Teacher::Live`] the logic
/// loss also pulls on the posterior through it, except where the clamp is
/// active.
pub fn compute_loss(
    params: &ModelParams,
    bundle: &FeatureBundle,
    y_star: Label,
    weights: LossWeights,
    eps: f64,
    teacher_mode: Teacher,
    grad: Option<(&mut ModelParams, f64)>,
) -> Result<LossParts> {
    params.check_bundle(bundle)?;
    if bundle.n_real() == 0 {
        return Err(Error::AllMasked);
    }
    let (d, h) = (params.d, params.h);
    let y_true = VeracityDist::from(y_star).p_true();

    let mut out1 = [0.0];
    let mut slots = Vec::with_capacity(bundle.n_real());
    for (slot, (h_local, _)) in bundle.h_locals.iter().zip(&bundle.mask).enumerate().filter(|(_, (_, &m))| m) {
        let mut prior_act = vec![0.0; h];
        params.prior_head.forward(h_local, &mut prior_act, &mut out1);
        let (prior, prior_live) = squash(out1[0]);

        let mut q_in = vec![0.0; 3 * d];
        q_input(params, y_true, h_local, &bundle.h_global, &mut q_in);
        let mut q_act = vec![0.0; h];
        params.q_head.forward(&q_in, &mut q_act, &mut out1);
        let (q, q_live) = squash(out1[0]);
        slots.push(SlotCache { slot, prior_act, prior, prior_live, q_in, q_act, q, q_live });
    }

    let mut z = vec![1.0; params.max_phrases];
    for s in &slots {
        z[s.slot] = s.q;
    }
    let mut p_in = vec![0.0; params.p_head.in_dim];
    p_input(params, &z, bundle, &mut p_in);
    let mut p_act = vec![0.0; h];
    let mut logits = [0.0; 2];
    params.p_head.forward(&p_in, &mut p_act, &mut logits);
    let (p, p_live) = squash(logits[0] - logits[1]);
    let p_dist = VeracityDist::from_valid(p);

    let expectation = -p_dist.prob(y_star).ln();
    let mut kl = 0.0;
    for s in &slots {
        kl += kl_bernoulli(VeracityDist::from_valid(s.q), VeracityDist::from_valid(s.prior))?;
    }
    let raw_teacher: f64 = slots.iter().map(|s| s.q).product();
    let teacher = match teacher_mode {
        Teacher::Fixed(t) => t,
        Teacher::Live | Teacher::Detached => clamp_prob(raw_teacher, eps),
    };
    let logic = kl_bernoulli(p_dist, VeracityDist::from_valid(teacher))?;
    let var = expectation + kl;
    let total = weights.var * var + weights.logic * logic;
    let parts = LossParts { expectation, kl, var, logic, total, teacher };

    if !total.is_finite() || !var.is_finite() || !logic.is_finite() {
        let block = params.first_non_finite().map(str::to_string).unwrap_or_else(|| {
            if !expectation.is_finite() {
                "expectation term".into()
            } else if !kl.is_finite() {
                "kl term".into()
            } else {
                "logic term".into()
            }
        });
        return Err(Error::NonFinite { block });
    }

    let Some((grad, scale)) = grad else {
        return Ok(parts);
    };

    let mut dpre = vec![0.0; h];
    // Predictor: Δ = l0 - l1 and p = sigmoid(Δ).
    let mut d_delta = 0.0;
    if p_live {
        let d_exp = match y_star {
            Label::Pristine => -(1.0 - p),
            Label::Falsified => p,
        };
        let d_logic = kl_grad_p(p, teacher) * p * (1.0 - p);
        d_delta = scale * (weights.var * d_exp + weights.logic * d_logic);
    }
    let mut dp_in = vec![0.0; p_in.len()];
    params
        .p_head
        .backward(&p_in, &p_act, &[d_delta, -d_delta], &mut grad.p_head, Some(&mut dp_in), &mut dpre);

    let (z_t, z_f) = params.z_emb.split_at(d);
    let mut dq_from_p = vec![0.0; params.max_phrases];
    for (i, &zi) in z.iter().enumerate() {
        let dmix = &dp_in[i * d..(i + 1) * d];
        let (gt, gf) = grad.z_emb.split_at_mut(d);
        for k in 0..d {
            gt[k] += zi * dmix[k];
            gf[k] += (1.0 - zi) * dmix[k];
        }
        if bundle.mask[i] {
            dq_from_p[i] = dmix.iter().zip(z_t.iter().zip(z_f)).map(|(g, (a, b))| g * (a - b)).sum();
        }
    }

    // dt/dq_i = Π_{j≠i} q_j = t / q_i, and q_i >= eps > 0.
    let d_teacher = if teacher_mode == Teacher::Live && raw_teacher == teacher {
        scale * weights.logic * kl_grad_q(p, teacher)
    } else {
        0.0
    };
    let mut dq_in = vec![0.0; 3 * d];
    for s in &slots {
        let dq = dq_from_p[s.slot] + scale * weights.var * kl_grad_p(s.q, s.prior) + d_teacher * raw_teacher / s.q;
        let ds_q = if s.q_live { dq * s.q * (1.0 - s.q) } else { 0.0 };
        params
            .q_head
            .backward(&s.q_in, &s.q_act, &[ds_q], &mut grad.q_head, Some(&mut dq_in), &mut dpre);
        let (gt, gf) = grad.label_emb.split_at_mut(d);
        for k in 0..d {
            gt[k] += y_true * dq_in[k];
            gf[k] += (1.0 - y_true) * dq_in[k];
        }

        let d_prior = scale * weights.var * kl_grad_q(s.q, s.prior);
        let ds_prior = if s.prior_live { d_prior * s.prior * (1.0 - s.prior) } else { 0.0 };
        params.prior_head.backward(
            &bundle.h_locals[s.slot],
            &s.prior_act,
            &[ds_prior],
            &mut grad.prior_head,
            None,
            &mut dpre,
        );
    }
    Ok(parts)
}

fn loss_with_grad(params: &ModelParams, inst: &Instance, y_star: Label, weights: LossWeights) -> Result<(f64, ModelParams)> {
    let bundle = build_features(inst, params.max_phrases)?;
    let mut grad = params.zeros_like();
    let parts = compute_loss(params, &bundle, y_star, weights, DEFAULT_EPS, Teacher::Live, Some((&mut grad, 1.0)))?;
    Ok((parts.total, grad))
}

/// Negative ELBO and its gradient.
pub fn elbo_loss(params: &ModelParams, inst: &Instance, y_star: Label) -> Result<(f64, ModelParams)> {
    loss_with_grad(params, inst, y_star, LossWeights::VARIATIONAL)
}

/// Distillation loss alone and its gradient.
pub fn logic_path_loss(params: &ModelParams, inst: &Instance, y_star: Label) -> Result<(f64, ModelParams)> {
    loss_with_grad(params, inst, y_star, LossWeights::LOGIC)
}

/// `(1 - λ) · elbo + λ · logic` and its gradient.
pub fn final_loss(params: &ModelParams, inst: &Instance, y_star: Label, lambda: f64) -> Result<(f64, ModelParams)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("lambda {lambda} outside [0, 1]")));
    }
    loss_with_grad(params, inst, y_star, LossWeights::from_lambda(lambda))
}

/// Mean-field expectation term for explicit posterior marginals `q`.
pub fn mean_field_expectation(
    params: &ModelParams,
    bundle: &FeatureBundle,
    q: &[VeracityDist],
    y_star: Label,
) -> Result<f64> {
    Ok(-predict_p(params, q, bundle)?.prob(y_star).ln())
}

/// Exact `E_q[-log p(y* | z, x)]` by summing over every assignment of the
/// real slots, for explicit factorized marginals `q`.
pub fn enumerate_expectation_with(
    params: &ModelParams,
    bundle: &FeatureBundle,
    q: &[VeracityDist],
    y_star: Label,
) -> Result<f64> {
    params.check_bundle(bundle)?;
    let real: Vec<usize> = (0..bundle.mask.len()).filter(|&i| bundle.mask[i]).collect();
    if real.len() > ENUMERATION_LIMIT {
        return Err(Error::TooManyPhrases { n: real.len(), limit: ENUMERATION_LIMIT });
    }
    let mut z = vec![VeracityDist::PRISTINE; params.max_phrases];
    let mut total = 0.0;
    for bits in 0u32..(1 << real.len()) {
        let mut weight = 1.0;
        for (b, &slot) in real.iter().enumerate() {
            let pristine = bits & (1 << b) == 0;
            z[slot] = if pristine { VeracityDist::PRISTINE } else { VeracityDist::FALSIFIED };
            weight *= if pristine { q[slot].p_true() } else { q[slot].p_false() };
        }
        if weight == 0.0 {
            continue;
        }
        total += weight * -predict_p(params, &z, bundle)?.prob(y_star).ln();
    }
    Ok(total)
}

/// Exact expectation under the posterior conditioned on `y_star`.
pub fn enumerate_expectation(params: &ModelParams, inst: &Instance, y_star: Label) -> Result<f64> {
    let bundle = build_features(inst, params.max_phrases)?;
    let q = crate::model::posterior_q(params, y_star.into(), &bundle)?;
    enumerate_expectation_with(params, &bundle, &q, y_star)
}
