//! Two-outcome probability primitives shared by every head and loss.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamping band used before any logarithm.
pub const DEFAULT_EPS: f64 = 1e-7;

/// Caption or phrase veracity. `Pristine` is the logical true value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pristine,
    Falsified,
}

impl Label {
    pub fn is_falsified(self) -> bool {
        self == Label::Falsified
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pristine => "pristine",
            Label::Falsified => "falsified",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pristine => "Pristine",
            Label::Falsified => "Falsified",
        })
    }
}

/// Distribution over {Pristine, Falsified}. Only the Pristine mass is
/// stored; the Falsified mass is always `1 - p_true`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct VeracityDist {
    p_true: f64,
}

impl VeracityDist {
    pub const PRISTINE: VeracityDist = VeracityDist { p_true: 1.0 };
    pub const FALSIFIED: VeracityDist = VeracityDist { p_true: 0.0 };
    pub const UNIFORM: VeracityDist = VeracityDist { p_true: 0.5 };

    pub fn new(p_true: f64) -> Result<Self> {
        if p_true.is_finite() && (0.0..=1.0).contains(&p_true) {
            Ok(VeracityDist { p_true })
        } else {
            Err(Error::InvalidProbability(p_true))
        }
    }

    /// Callers guarantee `p_true` is already a valid probability.
    pub(crate) fn from_valid(p_true: f64) -> Self {
        debug_assert!(p_true.is_finite() && (0.0..=1.0).contains(&p_true), "{p_true}");
        VeracityDist { p_true }
    }

    pub fn p_true(self) -> f64 {
        self.p_true
    }

    pub fn p_false(self) -> f64 {
        1.0 - self.p_true
    }

    pub fn prob(self, label: Label) -> f64 {
        match label {
            Label::Pristine => self.p_true(),
            Label::Falsified => self.p_false(),
        }
    }

    /// Pristine when `p_true >= threshold`; ties go to Pristine.
    pub fn threshold(self, threshold: f64) -> Label {
        if self.p_true >= threshold {
            Label::Pristine
        } else {
            Label::Falsified
        }
    }

    pub fn argmax(self) -> Label {
        self.threshold(0.5)
    }

    pub fn is_degenerate(self) -> bool {
        self.p_true == 0.0 || self.p_true == 1.0
    }

    pub fn clamped(self, eps: f64) -> Self {
        VeracityDist {
            p_true: clamp_prob(self.p_true, eps),
        }
    }
}

impl From<Label> for VeracityDist {
    fn from(label: Label) -> Self {
        match label {
            Label::Pristine => VeracityDist::PRISTINE,
            Label::Falsified => VeracityDist::FALSIFIED,
        }
    }
}

impl TryFrom<f64> for VeracityDist {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        VeracityDist::new(p)
    }
}

impl From<VeracityDist> for f64 {
    fn from(d: VeracityDist) -> f64 {
        d.p_true
    }
}

/// Clamp `x` into `[eps, 1 - eps]`.
pub fn clamp_prob(x: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0 && eps < 0.5);
    x.clamp(eps, 1.0 - eps)
}

/// `D_KL(p || q)` for two Bernoulli distributions, with `0 log 0 = 0`.
pub fn kl_bernoulli(p: VeracityDist, q: VeracityDist) -> Result<f64> {
    let term = |a: f64, b: f64| -> Result<f64> {
        if a == 0.0 {
            Ok(0.0)
        } else if b == 0.0 {
            Err(Error::UndefinedSupport { mass: a })
        } else {
            Ok(a * (a / b).ln())
        }
    };
    let kl = term(p.p_true(), q.p_true())? + term(p.p_false(), q.p_false())?;
    Ok(kl.max(0.0))
}

/// Derivative of `D_KL(p || q)` with respect to `p_true`, both interior.
pub(crate) fn kl_grad_p(p: f64, q: f64) -> f64 {
    logit(p) - logit(q)
}

/// Derivative of `D_KL(p || q)` with respect to `q_true`, both interior.
pub(crate) fn kl_grad_q(p: f64, q: f64) -> f64 {
    (q - p) / (q * (1.0 - q))
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
