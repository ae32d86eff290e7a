//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use serde::Serialize;

use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::loss::{compute_loss, LossWeights, Teacher};
use crate::model::{build_features, ModelParams};
use crate::prob::{Label, DEFAULT_EPS};
use crate::seed;

/// Minimum coordinates taken from every tensor when subsampling.
const PER_TENSOR_FLOOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    All,
    /// Roughly `n` coordinates spread over every tensor by size, with a
    /// floor per tensor, chosen by `seed`.
    Sample { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares analytic gradients of the final loss (live teacher) against
/// central differences with the given `step`.
pub fn grad_check(
    params: &ModelParams,
    inst: &Instance,
    y_star: Label,
    lambda: f64,
    step: f64,
    coverage: Coverage,
) -> Result<GradCheckReport> {
    grad_check_with(params, inst, y_star, lambda, step, coverage, Teacher::Live)
}

/// [`grad_check`] for a chosen teacher mode. With [`Teacher::Detached`] the
/// teacher is frozen at its value for the unperturbed parameters while
/// differencing.
pub fn grad_check_with(
    params: &ModelParams,
    inst: &Instance,
    y_star: Label,
    lambda: f64,
    step: f64,
    coverage: Coverage,
    mode: Teacher,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let weights = LossWeights::from_lambda(lambda);
    let bundle = build_features(inst, params.max_phrases)?;
    let mut analytic = params.zeros_like();
    let base = compute_loss(params, &bundle, y_star, weights, DEFAULT_EPS, mode, Some((&mut analytic, 1.0)))?;
    let teacher = match mode {
        Teacher::Detached => Teacher::Fixed(base.teacher),
        other => other,
    };

    let layout = params.layout();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let picks: Vec<Vec<usize>> = match coverage {
        Coverage::All => sizes.iter().map(|&n| (0..n).collect()).collect(),
        Coverage::Sample { n, seed: s } => {
            let mut rng = seed::stream(s, &[0x6C]);
            sizes
                .iter()
                .map(|&len| {
                    let want = ((n * len) as f64 / total as f64).round() as usize;
                    let k = want.max(PER_TENSOR_FLOOR).min(len);
                    let mut idx = sample(&mut rng, len, k).into_vec();
                    idx.sort_unstable();
                    idx
                })
                .collect()
        }
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: 0,
    };
    let analytic_tensors = analytic.tensors();
    for (k, indices) in picks.iter().enumerate() {
        for &j in indices {
            let original = probe.tensors()[k][j];
            probe.tensors_mut()[k][j] = original + step;
            let plus = compute_loss(&probe, &bundle, y_star, weights, DEFAULT_EPS, teacher, None)?.total;
            probe.tensors_mut()[k][j] = original - step;
            let minus = compute_loss(&probe, &bundle, y_star, weights, DEFAULT_EPS, teacher, None)?.total;
            probe.tensors_mut()[k][j] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic_tensors[k][j];
            let err = relative_error(a, numeric);
            report.n_checked += 1;
            if err > report.max_rel_error || report.worst_tensor.is_empty() {
                report.max_rel_error = err;
                report.worst_tensor = layout[k].name.to_string();
                report.worst_index = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
