//! Hájek estimation and design diagnostics.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::sample::SurveySample;
use crate::distribution::WeightedDistribution;
use crate::error::{Error, Result};

/// Weighted empirical law of the outcomes of `member` units, with weights
/// proportional to `m_i / pi_i` (`m_i = 1` when no multipliers are given).
pub fn hajek_distribution<F>(
    sample: &SurveySample,
    member: F,
    multipliers: Option<&[f64]>,
) -> Result<WeightedDistribution>
where
    F: Fn(usize) -> bool,
{
    if let Some(m) = multipliers {
        if m.len() != sample.len() {
            return Err(Error::DimensionMismatch {
                expected: sample.len(),
                got: m.len(),
            });
        }
    }
    let pi = sample.pi();
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    for i in 0..sample.len() {
        if !member(i) {
            continue;
        }
        let m = multipliers.map_or(1.0, |m| m[i]);
        if m > 0.0 {
            rows.push(i);
            raw.push(m / pi[i]);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let points = sample.y().select(Axis(0), &rows);
    WeightedDistribution::from_unnormalized(points, raw)
}

/// Summary of how far a realized sample is from its design expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignDiagnostics {
    /// `(sum 1/pi - N) / N`; zero in expectation.
    pub lln_gap: f64,
    /// Kish effective sample size.
    pub n_eff: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub sampling_fraction: f64,
    pub n_selected: usize,
    pub population_size: usize,
}

pub fn kish_n_eff(weights: &[f64]) -> f64 {
    let sum: f64 = weights.iter().sum();
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if sq > 0.0 {
        sum * sum / sq
    } else {
        0.0
    }
}

pub fn design_diagnostics(sample: &SurveySample, population_size: usize) -> DesignDiagnostics {
    let w = sample.weights();
    let n = population_size as f64;
    let total: f64 = w.iter().sum();
    let pi = sample.pi();
    // Equal weights give exactly n_s; rounding in the ratio must not exceed it.
    let n_eff = kish_n_eff(&w).min(sample.len() as f64);
    DesignDiagnostics {
        lln_gap: (total - n) / n,
        n_eff,
        pi_min: pi.iter().copied().fold(f64::INFINITY, f64::min),
        pi_max: pi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sampling_fraction: sample.len() as f64 / n,
        n_selected: sample.len(),
        population_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::sample::SampleDesign;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn sample_with(pi: Vec<f64>) -> SurveySample {
        let n = pi.len();
        let y = Array2::from_shape_fn((n, 2), |(i, j)| (i + 10 * j) as f64);
        let x = Array2::zeros((n, 1));
        SurveySample::new(x, y, pi, vec![0; n], vec![0; n], SampleDesign::Poisson).unwrap()
    }

    #[test]
    fn equal_probabilities_give_uniform_weights() {
        let s = sample_with(vec![0.2; 8]);
        let d = hajek_distribution(&s, |_| true, None).unwrap();
        assert!(d.weights().iter().all(|&w| (w - 0.125).abs() < 1e-15));
    }

    #[test]
    fn weights_follow_inverse_probabilities() {
        let s = sample_with(vec![0.5, 0.25, 0.1]);
        let d = hajek_distribution(&s, |i| i < 2, None).unwrap();
        assert!((d.weights()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.weights()[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.point(1).to_vec(), vec![1.0, 11.0]);
    }

    #[test]
    fn empty_membership_is_an_error() {
        let s = sample_with(vec![0.5; 3]);
        assert!(matches!(
            hajek_distribution(&s, |_| false, None),
            Err(Error::EmptyRegion)
        ));
        let zero = [0.0; 3];
        assert!(matches!(
            hajek_distribution(&s, |_| true, Some(&zero)),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn census_diagnostics() {
        let s = sample_with(vec![1.0; 40]);
        let d = design_diagnostics(&s, 40);
        assert_eq!(d.lln_gap, 0.0);
        assert_eq!(d.n_eff, 40.0);
        assert_eq!(d.sampling_fraction, 1.0);
    }

    proptest! {
        #[test]
        fn hajek_matches_direct_formula(
            pi in proptest::collection::vec(0.01f64..=1.0, 1..40),
            mask in proptest::collection::vec(any::<bool>(), 40),
            mult in proptest::collection::vec(0.0f64..3.0, 40),
            scale in 0.1f64..10.0,
        ) {
            let n = pi.len();
            prop_assume!((0..n).any(|i| mask[i] && mult[i] > 0.0));
            let s = sample_with(pi.clone());
            let m = &mult[..n];
            let d = hajek_distribution(&s, |i| mask[i], Some(m)).unwrap();
            let denom: f64 = (0..n).filter(|&i| mask[i]).map(|i| m[i] / pi[i]).sum();
            let expected: Vec<f64> = (0..n)
                .filter(|&i| mask[i] && m[i] > 0.0)
                .map(|i| m[i] / pi[i] / denom)
                .collect();
            prop_assert_eq!(d.len(), expected.len());
            for (a, b) in d.weights().iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-14);
            }
            prop_assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = m.iter().map(|v| v * scale).collect();
            let d2 = hajek_distribution(&s, |i| mask[i], Some(&scaled)).unwrap();
            for (a, b) in d.weights().iter().zip(d2.weights()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn kish_bounded_by_sample_size(pi in proptest::collection::vec(0.01f64..=1.0, 2..50)) {
            let s = sample_with(pi.clone());
            let d = design_diagnostics(&s, 1000);
            let n = pi.len() as f64;
            prop_assert!(d.n_eff <= n);
            let all_equal = pi.iter().all(|&p| (p - pi[0]).abs() < 1e-6);
            if !all_equal {
                prop_assert!(d.n_eff < n);
            }
        }
    }
}
