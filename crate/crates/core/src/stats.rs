//! Small hypothesis-testing helpers for comparing benchmark runs.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};
use crate::rng;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sided paired t-test of `H1: mean(a - b) < 0`.
pub fn paired_t_less(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let se = (variance(&d) / n).sqrt();
    let t = mean(&d) / se;
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let p = if t.is_nan() { 1.0 } else { dist.cdf(t) };
    Ok(TestResult {
        statistic: t,
        p_value: p,
    })
}

/// One-sided F-test of `H1: var(a) > var(b)` for independent samples.
pub fn variance_ratio_greater(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: a.len().min(b.len()),
        });
    }
    let f = variance(a) / variance(b);
    let dist = FisherSnedecor::new(a.len() as f64 - 1.0, b.len() as f64 - 1.0)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(TestResult {
        statistic: f,
        p_value: 1.0 - dist.cdf(f),
    })
}

/// Percentile bootstrap interval of `stat(a, b)`, resampling index pairs.
pub fn paired_bootstrap_ci<F>(
    a: &[f64],
    b: &[f64],
    stat: F,
    reps: usize,
    level: f64,
    seed: u64,
) -> (f64, f64)
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let n = a.len();
    let mut rng = rng::stream(seed);
    let mut draws = Vec::with_capacity(reps);
    let (mut ra, mut rb) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..reps {
        for k in 0..n {
            let i = rng.random_range(0..n);
            ra[k] = a[i];
            rb[k] = b[i];
        }
        draws.push(stat(&ra, &rb));
    }
    draws.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| draws[((q * (reps - 1) as f64).round() as usize).min(reps - 1)];
    (at(tail), at(1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(variance(&[1.0, 2.0, 3.0]), 1.0);
    }

    #[test]
    fn paired_test_detects_shift() {
        let a: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| v + 1.0 + 0.1 * (i % 3) as f64)
            .collect();
        let r = paired_t_less(&a, &b).unwrap();
        assert!(r.p_value < 1e-6 && r.statistic < 0.0);
        assert!(paired_t_less(&b, &a).unwrap().p_value > 0.99);
    }

    #[test]
    fn paired_t_matches_reference_value() {
        // d = (-1, -2, -3, 0): mean -1.5, sd 1.2910, t = -2.3238 on 3 df.
        let r = paired_t_less(&[0.0, 0.0, 0.0, 0.0], &[1.0, 2.0, 3.0, 0.0]).unwrap();
        assert!((r.statistic + 2.32379).abs() < 1e-4);
        assert!((r.p_value - 0.05138).abs() < 1e-4, "{}", r.p_value);
    }

    #[test]
    fn f_test_reference_value() {
        // var(a) = 4, var(b) = 1 on (4, 4) df: P(F > 4) = 0.10408.
        let a = [-2.0, 2.0, -2.0, 2.0, 0.0];
        let b = [-1.0, 1.0, -1.0, 1.0, 0.0];
        let r = variance_ratio_greater(&a, &b).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.10408).abs() < 1e-4, "{}", r.p_value);
    }

    #[test]
    fn bootstrap_interval_covers_shift() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 2.0).collect();
        let (lo, hi) = paired_bootstrap_ci(&a, &b, |x, y| mean(y) - mean(x), 500, 0.95, 1);
        assert!(lo <= 2.0 + 1e-12 && hi >= 2.0 - 1e-12);
    }
}
