//! The three parameterized distributions over Hadamard features:
//! the phrase prior `p(z_i | x)`, the variational posterior
//! `q(z_i | y, x)`, and the caption predictor `p(y | z, x)`.
//!
//! Every head is a two-layer tanh MLP. The posterior sees
//! `[label_mix(y), h_local_i, h_global]`; the predictor sees
//! `[z_mix_1, ..., z_mix_M, h_global, mean(h_local)]`, where a mix is the
//! probability-weighted blend of the two rows of an embedding table.
//! Padded phrase slots are pinned to `p(z = Pristine) = 1`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::prob::{clamp_prob, sigmoid, VeracityDist, DEFAULT_EPS};
use crate::seed;

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two-layer perceptron `out = W2 tanh(W1 x + b1) + b2`, row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Mlp {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Mlp {
            in_dim,
            hidden,
            out_dim,
            w1: vec![0.0; hidden * in_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; out_dim * hidden],
            b2: vec![0.0; out_dim],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Writes hidden activations into `act` and outputs into `out`.
    pub(crate) fn forward(&self, x: &[f64], act: &mut [f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (r, a) in act.iter_mut().enumerate() {
            let row = &self.w1[r * self.in_dim..(r + 1) * self.in_dim];
            *a = (self.b1[r] + dot(row, x)).tanh();
        }
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            *y = self.b2[o] + dot(row, act);
        }
    }

    /// Accumulates parameter gradients for upstream gradient `dout` into
    /// `grad`, and writes the input gradient into `dx` when requested.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        act: &[f64],
        dout: &[f64],
        grad: &mut Mlp,
        dx: Option<&mut [f64]>,
        dpre: &mut [f64],
    ) {
        let h = self.hidden;
        for (o, &g) in dout.iter().enumerate() {
            grad.b2[o] += g;
            axpy(g, act, &mut grad.w2[o * h..(o + 1) * h]);
        }
        for r in 0..h {
            let mut da = 0.0;
            for (o, &g) in dout.iter().enumerate() {
                da += self.w2[o * h + r] * g;
            }
            dpre[r] = da * (1.0 - act[r] * act[r]);
        }
        for (r, &g) in dpre.iter().enumerate() {
            grad.b1[r] += g;
            axpy(g, x, &mut grad.w1[r * self.in_dim..(r + 1) * self.in_dim]);
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dpre.iter().enumerate() {
                axpy(g, &self.w1[r * self.in_dim..(r + 1) * self.in_dim], dx);
            }
        }
    }
}

/// All trainable weights plus the dimensions they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub h: usize,
    pub max_phrases: usize,
    /// Seed the weights were initialized from; metadata only.
    pub seed: u64,
    /// Row 0 embeds Pristine, row 1 Falsified; conditions the posterior.
    pub label_emb: Vec<f64>,
    /// Row 0 embeds `z = Pristine`, row 1 `z = Falsified`; feeds the predictor.
    pub z_emb: Vec<f64>,
    pub prior_head: Mlp,
    pub q_head: Mlp,
    pub p_head: Mlp,
}

/// Shape of one named tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: &'static str,
    pub shape: Vec<usize>,
}

impl ModelParams {
    pub fn zeros(d: usize, h: usize, max_phrases: usize) -> Self {
        ModelParams {
            d,
            h,
            max_phrases,
            seed: 0,
            label_emb: vec![0.0; 2 * d],
            z_emb: vec![0.0; 2 * d],
            prior_head: Mlp::zeros(d, h, 1),
            q_head: Mlp::zeros(3 * d, h, 1),
            p_head: Mlp::zeros((max_phrases + 2) * d, h, 2),
        }
    }

    /// Same shapes, all zeros; used as a gradient or moment buffer.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            seed: self.seed,
            ..Self::zeros(self.d, self.h, self.max_phrases)
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Tensor names and shapes in canonical order.
    pub fn layout(&self) -> Vec<TensorInfo> {
        let (d, h, m) = (self.d, self.h, self.max_phrases);
        let t = |name, shape: &[usize]| TensorInfo { name, shape: shape.to_vec() };
        vec![
            t("label_emb", &[2, d]),
            t("z_emb", &[2, d]),
            t("prior.w1", &[h, d]),
            t("prior.b1", &[h]),
            t("prior.w2", &[1, h]),
            t("prior.b2", &[1]),
            t("q.w1", &[h, 3 * d]),
            t("q.b1", &[h]),
            t("q.w2", &[1, h]),
            t("q.b2", &[1]),
            t("p.w1", &[h, (m + 2) * d]),
            t("p.b1", &[h]),
            t("p.w2", &[2, h]),
            t("p.b2", &[2]),
        ]
    }

    /// Flat views in the order of [`ModelParams::layout`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.label_emb,
            &self.z_emb,
            &self.prior_head.w1,
            &self.prior_head.b1,
            &self.prior_head.w2,
            &self.prior_head.b2,
            &self.q_head.w1,
            &self.q_head.b1,
            &self.q_head.w2,
            &self.q_head.b2,
            &self.p_head.w1,
            &self.p_head.b1,
            &self.p_head.w2,
            &self.p_head.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.label_emb,
            &mut self.z_emb,
            &mut self.prior_head.w1,
            &mut self.prior_head.b1,
            &mut self.prior_head.w2,
            &mut self.prior_head.b2,
            &mut self.q_head.w1,
            &mut self.q_head.b1,
            &mut self.q_head.w2,
            &mut self.q_head.b2,
            &mut self.p_head.w1,
            &mut self.p_head.b1,
            &mut self.p_head.w2,
            &mut self.p_head.b2,
        ]
    }

    /// Name of the first tensor holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.layout()
            .into_iter()
            .zip(self.tensors())
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(info, _)| info.name)
    }

    pub fn check_bundle(&self, bundle: &FeatureBundle) -> Result<()> {
        if bundle.dim() != self.d {
            return Err(Error::DimensionMismatch {
                what: "feature dimension".into(),
                expected: self.d,
                got: bundle.dim(),
            });
        }
        if bundle.mask.len() != self.max_phrases {
            return Err(Error::DimensionMismatch {
                what: "phrase slots".into(),
                expected: self.max_phrases,
                got: bundle.mask.len(),
            });
        }
        Ok(())
    }

    /// `SHA-256` over the little-endian bytes of every tensor, hex encoded.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (info, t) in self.layout().iter().zip(self.tensors()) {
            hasher.update(info.name.as_bytes());
            for x in t {
                hasher.update(x.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
pub fn init_params(seed: u64, d: usize, h: usize, max_phrases: usize) -> Result<ModelParams> {
    if d == 0 || h == 0 || max_phrases == 0 {
        return Err(Error::config("d, h and max_phrases must be positive"));
    }
    let mut params = ModelParams::zeros(d, h, max_phrases);
    params.seed = seed;
    let mut rng = seed::stream(seed, &[0x1417]);
    let fill = |rng: &mut ChaCha8Rng, t: &mut [f64], fan_in: usize, fan_out: usize| {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        t.iter_mut().for_each(|x| *x = rng.random_range(-a..a));
    };
    fill(&mut rng, &mut params.label_emb, 2, d);
    fill(&mut rng, &mut params.z_emb, 2, d);
    for head in [&mut params.prior_head, &mut params.q_head, &mut params.p_head] {
        let (i, hd, o) = (head.in_dim, head.hidden, head.out_dim);
        fill(&mut rng, &mut head.w1, i, hd);
        fill(&mut rng, &mut head.w2, hd, o);
    }
    Ok(params)
}

/// Joint image/text features for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    /// `caption_emb ⊙ image_emb`.
    pub h_global: Vec<f64>,
    /// `phrase_emb_i ⊙ image_emb` for real slots, zeros for padding.
    pub h_locals: Vec<Vec<f64>>,
    /// `true` for real phrase slots.
    pub mask: Vec<bool>,
    /// Mean of the real local features.
    pub mean_local: Vec<f64>,
    /// Phrases dropped by truncation.
    pub n_truncated: usize,
}

impl FeatureBundle {
    pub fn dim(&self) -> usize {
        self.h_global.len()
    }

    pub fn n_real(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn max_phrases(&self) -> usize {
        self.mask.len()
    }
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Hadamard features, truncated or zero-padded to `max_phrases` slots.
pub fn build_features(inst: &Instance, max_phrases: usize) -> Result<FeatureBundle> {
    let d = inst.image_emb.len();
    let mismatch = |what: &str, got: usize| Error::DimensionMismatch {
        what: what.into(),
        expected: d,
        got,
    };
    if inst.caption_emb.len() != d {
        return Err(mismatch("caption_emb", inst.caption_emb.len()));
    }
    if let Some(v) = inst.phrase_embs.iter().find(|v| v.len() != d) {
        return Err(mismatch("phrase_embs", v.len()));
    }
    if max_phrases == 0 {
        return Err(Error::config("max_phrases must be positive"));
    }
    let n_real = inst.phrase_embs.len().min(max_phrases);
    let mut h_locals = vec![vec![0.0; d]; max_phrases];
    let mut mask = vec![false; max_phrases];
    for (i, v) in inst.phrase_embs.iter().take(max_phrases).enumerate() {
        h_locals[i] = hadamard(v, &inst.image_emb);
        mask[i] = true;
    }
    let mut mean_local = vec![0.0; d];
    if n_real > 0 {
        for h in &h_locals[..n_real] {
            for (m, x) in mean_local.iter_mut().zip(h) {
                *m += x;
            }
        }
        mean_local.iter_mut().for_each(|m| *m /= n_real as f64);
    }
    Ok(FeatureBundle {
        h_global: hadamard(&inst.caption_emb, &inst.image_emb),
        h_locals,
        mask,
        mean_local,
        n_truncated: inst.phrase_embs.len() - n_real,
    })
}

/// `p * table[0] + (1 - p) * table[1]`.
pub(crate) fn mix_rows(table: &[f64], p_true: f64, out: &mut [f64]) {
    let d = out.len();
    let (t, f) = table.split_at(d);
    for ((o, a), b) in out.iter_mut().zip(t).zip(f) {
        *o = p_true * a + (1.0 - p_true) * b;
    }
}

/// Clamped sigmoid, plus whether the clamp was inactive (unit derivative).
#[inline]
pub(crate) fn squash(logit: f64) -> (f64, bool) {
    let s = sigmoid(logit);
    let c = clamp_prob(s, DEFAULT_EPS);
    (c, c == s)
}

pub(crate) fn q_input(params: &ModelParams, y_true: f64, h_local: &[f64], h_global: &[f64], buf: &mut [f64]) {
    let d = params.d;
    mix_rows(&params.label_emb, y_true, &mut buf[..d]);
    buf[d..2 * d].copy_from_slice(h_local);
    buf[2 * d..].copy_from_slice(h_global);
}

/// `z_true[i]` is ignored (treated as 1) for padded slots.
pub(crate) fn p_input(params: &ModelParams, z_true: &[f64], bundle: &FeatureBundle, buf: &mut [f64]) {
    let d = params.d;
    for (i, (&p, &real)) in z_true.iter().zip(&bundle.mask).enumerate() {
        mix_rows(&params.z_emb, if real { p } else { 1.0 }, &mut buf[i * d..(i + 1) * d]);
    }
    let m = params.max_phrases;
    buf[m * d..(m + 1) * d].copy_from_slice(&bundle.h_global);
    buf[(m + 1) * d..].copy_from_slice(&bundle.mean_local);
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        })
    }
}

/// Prior `p(z_i = Pristine | x, w_i)` for one real phrase slot.
pub fn prior_phrase(params: &ModelParams, h_local: &[f64]) -> Result<VeracityDist> {
    check_len("local feature", params.d, h_local.len())?;
    let mut act = vec![0.0; params.h];
    let mut out = [0.0];
    params.prior_head.forward(h_local, &mut act, &mut out);
    Ok(VeracityDist::from_valid(squash(out[0]).0))
}

/// Prior for every slot; padded slots are exactly Pristine.
pub fn prior(params: &ModelParams, bundle: &FeatureBundle) -> Result<Vec<VeracityDist>> {
    params.check_bundle(bundle)?;
    bundle
        .h_locals
        .iter()
        .zip(&bundle.mask)
        .map(|(h, &real)| if real { prior_phrase(params, h) } else { Ok(VeracityDist::PRISTINE) })
        .collect()
}

/// Posterior `q(z_i | y, x)` for every slot, conditioned on a soft or hard
/// (`VeracityDist::from(label)`) caption label.
pub fn posterior_q(
    params: &ModelParams,
    y_cond: VeracityDist,
    bundle: &FeatureBundle,
) -> Result<Vec<VeracityDist>> {
    params.check_bundle(bundle)?;
    let mut buf = vec![0.0; 3 * params.d];
    let mut act = vec![0.0; params.h];
    let mut out = [0.0];
    let mut result = Vec::with_capacity(params.max_phrases);
    for (h, &real) in bundle.h_locals.iter().zip(&bundle.mask) {
        if !real {
            result.push(VeracityDist::PRISTINE);
            continue;
        }
        q_input(params, y_cond.p_true(), h, &bundle.h_global, &mut buf);
        params.q_head.forward(&buf, &mut act, &mut out);
        result.push(VeracityDist::from_valid(squash(out[0]).0));
    }
    Ok(result)
}

/// Predictor `p(y | z, x)` from one distribution per slot (length
/// `max_phrases`). Padded slots are read as Pristine whatever is passed.
pub fn predict_p(params: &ModelParams, z_cond: &[VeracityDist], bundle: &FeatureBundle) -> Result<VeracityDist> {
    params.check_bundle(bundle)?;
    check_len("z conditioning", params.max_phrases, z_cond.len())?;
    let z: Vec<f64> = z_cond.iter().map(|z| z.p_true()).collect();
    let mut buf = vec![0.0; params.p_head.in_dim];
    p_input(params, &z, bundle, &mut buf);
    let mut act = vec![0.0; params.h];
    let mut out = [0.0; 2];
    params.p_head.forward(&buf, &mut act, &mut out);
    Ok(VeracityDist::from_valid(squash(out[0] - out[1]).0))
}
