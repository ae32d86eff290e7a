//! Soft-logic teacher: a caption is Pristine only if every phrase is.
//!
//! The soft version uses the product t-norm, so the teacher's Pristine mass
//! is the product of the phrase Pristine masses.

use crate::error::{Error, Result};
use crate::prob::{clamp_prob, kl_bernoulli, Label, VeracityDist};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherDist {
    pub dist: VeracityDist,
    pub n_real_phrases: usize,
}

/// Product t-norm over the unmasked slots.
pub fn aggregate(z_probs: &[VeracityDist], mask: &[bool]) -> Result<TeacherDist> {
    if z_probs.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            what: "aggregate mask".into(),
            expected: z_probs.len(),
            got: mask.len(),
        });
    }
    let mut p_true = 1.0;
    let mut n = 0;
    for (z, _) in z_probs.iter().zip(mask).filter(|(_, &m)| m) {
        p_true *= z.p_true();
        n += 1;
    }
    if n == 0 {
        return Err(Error::AllMasked);
    }
    Ok(TeacherDist {
        dist: VeracityDist::from_valid(p_true),
        n_real_phrases: n,
    })
}

/// Distillation loss `KL(p_y || teacher)`, teacher clamped to `[eps, 1-eps]`.
/// The teacher is a constant target.
pub fn logic_loss(p_y: VeracityDist, teacher: &TeacherDist, eps: f64) -> Result<f64> {
    let target = VeracityDist::from_valid(clamp_prob(teacher.dist.p_true(), eps));
    kl_bernoulli(p_y, target)
}

/// Falsified iff any phrase is Falsified.
pub fn hard_aggregate(z_labels: &[Label]) -> Result<Label> {
    if z_labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    Ok(if z_labels.iter().any(|l| l.is_falsified()) {
        Label::Falsified
    } else {
        Label::Pristine
    })
}
