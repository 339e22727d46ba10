//! Plug-in functionals of predicted conditional laws and Mahalanobis
//! tolerance regions.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::distribution::WeightedDistribution;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::kernel::{self, KernelSpec};

/// Slack on cumulative weights when inverting a weighted CDF, so that rounding
/// in the running sum does not skip the intended atom.
const CUMULATIVE_SLACK: f64 = 1e-12;

pub fn cond_mean(dist: &WeightedDistribution) -> Vec<f64> {
    let mut mean = vec![0.0; dist.dim()];
    for (y, w) in dist.iter() {
        for (m, v) in mean.iter_mut().zip(y.iter()) {
            *m += w * v;
        }
    }
    mean
}

/// Weighted covariance. `degenerate` is set when the law has a single support
/// point, in which case the matrix is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub matrix: Array2<f64>,
    pub degenerate: bool,
}

pub fn cond_cov(dist: &WeightedDistribution) -> CovarianceEstimate {
    let d = dist.dim();
    let mean = cond_mean(dist);
    let mut matrix = Array2::zeros((d, d));
    for (y, w) in dist.iter() {
        for a in 0..d {
            let da = y[a] - mean[a];
            for b in 0..=a {
                matrix[[a, b]] += w * da * (y[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            matrix[[b, a]] = matrix[[a, b]];
        }
    }
    CovarianceEstimate {
        matrix,
        degenerate: dist.support_size() < 2,
    }
}

/// Mean, covariance and support size of a predicted law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSummary {
    pub mean: Vec<f64>,
    pub covariance: Array2<f64>,
    pub support_size: usize,
    pub degenerate: bool,
}

impl ConditionalSummary {
    pub fn of(dist: &WeightedDistribution) -> Self {
        let cov = cond_cov(dist);
        Self {
            mean: cond_mean(dist),
            covariance: cov.matrix,
            support_size: dist.support_size(),
            degenerate: cov.degenerate,
        }
    }

    /// `1e-8 * trace / d`, the ridge used when none is given.
    pub fn default_ridge(&self) -> f64 {
        let d = self.mean.len();
        1e-8 * (0..d).map(|k| self.covariance[[k, k]]).sum::<f64>() / d as f64
    }
}

/// Weighted share of support points lying componentwise at or below `y`.
pub fn cond_cdf(dist: &WeightedDistribution, y: &[f64]) -> Result<f64> {
    if y.len() != dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: y.len(),
        });
    }
    let total: f64 = dist
        .iter()
        .filter(|(p, _)| p.iter().zip(y).all(|(a, b)| a <= b))
        .map(|(_, w)| w)
        .sum();
    Ok(total.min(1.0))
}

/// Smallest value whose cumulative weight reaches `level`, ties in value
/// merged. `values` and `weights` need not be sorted or normalized.
pub fn weighted_quantile(values: &[f64], weights: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: weights.len(),
        });
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Config(format!(
            "quantile level {level} outside [0, 1]"
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyRegion);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let target = level * total;
    let mut cum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cum += weights[i];
        let last_of_value = order.get(k + 1).is_none_or(|&j| values[j] > values[i]);
        if last_of_value && cum >= target - CUMULATIVE_SLACK * total {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("nonempty")])
}

/// Weighted left-continuous quantile of coordinate `k` at level `tau`.
pub fn cond_quantile(dist: &WeightedDistribution, k: usize, tau: f64) -> Result<f64> {
    if k >= dist.dim() {
        return Err(Error::DimensionMismatch {
            expected: dist.dim(),
            got: k + 1,
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!(
            "quantile level {tau} outside (0, 1)"
        )));
    }
    let values: Vec<f64> = dist.points().column(k).to_vec();
    weighted_quantile(&values, dist.weights(), tau)
}

/// `(y - mean)^T (cov + ridge I)^{-1} (y - mean)`; `ridge = None` uses
/// [`ConditionalSummary::default_ridge`].
pub fn mahalanobis_score(
    summary: &ConditionalSummary,
    y: &[f64],
    ridge: Option<f64>,
) -> Result<f64> {
    let d = summary.mean.len();
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    let ridge = ridge.unwrap_or_else(|| summary.default_ridge());
    let mut m = DMatrix::from_fn(d, d, |a, b| summary.covariance[[a, b]]);
    for k in 0..d {
        m[(k, k)] += ridge;
    }
    let diff = DVector::from_fn(d, |k, _| y[k] - summary.mean[k]);
    let chol = m.cholesky().ok_or(Error::SingularCovariance)?;
    let solved = chol.solve(&diff);
    Ok(diff.dot(&solved).max(0.0))
}

/// Global Mahalanobis threshold: the survey-weighted `1 - alpha` quantile of
/// in-sample scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRegion {
    pub alpha: f64,
    pub threshold: f64,
    /// Ridge passed to every score; `None` means the per-query default.
    pub ridge: Option<f64>,
}

/// Score of every training unit under its own predicted law.
pub fn in_sample_scores(forest: &Forest, ridge: Option<f64>) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let sample = forest.sample();
    (0..sample.len())
        .into_par_iter()
        .map(|i| {
            let x = sample.covariates(i).to_vec();
            let y = sample.outcome(i).to_vec();
            let summary = ConditionalSummary::of(&forest.predict_distribution(&x)?);
            mahalanobis_score(&summary, &y, ridge)
        })
        .collect()
}

pub fn tolerance_threshold(
    forest: &Forest,
    alpha: f64,
    ridge: Option<f64>,
) -> Result<ToleranceRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
    }
    let scores = in_sample_scores(forest, ridge)?;
    let threshold = weighted_quantile(&scores, &forest.sample().weights(), 1.0 - alpha)?;
    Ok(ToleranceRegion {
        alpha,
        threshold,
        ridge,
    })
}

pub fn tolerance_contains(
    region: &ToleranceRegion,
    forest: &Forest,
    x: &[f64],
    y: &[f64],
) -> Result<bool> {
    let summary = ConditionalSummary::of(&forest.predict_distribution(x)?);
    Ok(mahalanobis_score(&summary, y, region.ridge)? <= region.threshold)
}

pub fn mmd_to_reference(
    dist: &WeightedDistribution,
    reference: &WeightedDistribution,
    spec: &KernelSpec,
) -> Result<f64> {
    Ok(kernel::mmd2_exact(dist, reference, spec)?.sqrt())
}
