//! Super-population generator with an informative two-stage design.
//!
//! Outcomes depend on a latent design variable `Z` that also drives the PSU
//! measure of size, so ignoring the inclusion probabilities biases estimates
//! of the conditional law of `Y` given the covariates.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{draw_sample, DesignSpec, FinitePopulation, PsuKey, SurveySample};
use crate::error::{Error, Result};
use crate::rng::{self, label};

/// Correlation of the two noise components.
pub const NOISE_CORRELATION: f64 = 0.3;

/// Sample size as a share of the population size that the calibrated plans
/// aim for.
pub const TARGET_SAMPLING_RATE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub size: usize,
    /// Number of covariates, at least 2.
    pub covariates: usize,
    pub strata: u32,
    pub psus_per_stratum: u32,
    /// Replace both mean functions by zero.
    #[serde(default)]
    pub null_signal: bool,
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.covariates < 2 {
            return Err(Error::Config("at least two covariates are required".into()));
        }
        if self.strata == 0 || self.psus_per_stratum == 0 {
            return Err(Error::Config(
                "strata and psus_per_stratum must be positive".into(),
            ));
        }
        if (self.size as u64) < self.strata as u64 * self.psus_per_stratum as u64 {
            return Err(Error::Config(format!(
                "population of {} cannot fill {} strata of {} PSUs",
                self.size, self.strata, self.psus_per_stratum
            )));
        }
        Ok(())
    }
}

/// Conditional means of the two outcomes given covariates and `z`.
pub fn mean_function(x: &[f64], z: f64, null_signal: bool) -> [f64; 2] {
    if null_signal {
        return [0.0, 0.0];
    }
    let (x1, x2) = (x[0], x[1]);
    [
        1.5 * x2 + (2.0 + 50.0 * z) * x1,
        1.5 * x2 - z * (3.0 * x2 + 1.0),
    ]
}

/// Lower Cholesky factor of the noise covariance.
fn noise_factor() -> [[f64; 2]; 2] {
    let r = NOISE_CORRELATION;
    [[1.0, 0.0], [r, (1.0 - r * r).sqrt()]]
}

/// Covariate vector drawn from the super-population law.
pub fn draw_covariates<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(p);
    x.push(rng.random::<f64>());
    x.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
    for _ in 2..p {
        x.push(StandardNormal.sample(rng));
    }
    x
}

/// Draws a finite population. Strata are assigned uniformly at random and
/// PSUs are equal-count bins of `x1` within each stratum. A stratum too small
/// to hold its PSUs triggers a redraw.
pub fn generate_population(cfg: &PopulationConfig, seed: u64) -> Result<FinitePopulation> {
    cfg.validate()?;
    for attempt in 0..100u64 {
        let mut rng = rng::stream(rng::derive_path(seed, &[label::POPULATION, attempt]));
        let n = cfg.size;
        let p = cfg.covariates;
        let mut x = Array2::zeros((n, p));
        let mut y = Array2::zeros((n, 2));
        let mut z = Vec::with_capacity(n);
        let mut stratum = Vec::with_capacity(n);
        let l = noise_factor();
        for i in 0..n {
            let zi: f64 = StandardNormal.sample(&mut rng);
            let xi = draw_covariates(&mut rng, p);
            let mu = mean_function(&xi, zi, cfg.null_signal);
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            y[[i, 0]] = mu[0] + l[0][0] * e0;
            y[[i, 1]] = mu[1] + l[1][0] * e0 + l[1][1] * e1;
            for (k, v) in xi.into_iter().enumerate() {
                x[[i, k]] = v;
            }
            z.push(zi);
            stratum.push(rng.random_range(1..=cfg.strata));
        }
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &h) in stratum.iter().enumerate() {
            members.entry(h).or_default().push(i);
        }
        let j = cfg.psus_per_stratum as usize;
        if members.len() < cfg.strata as usize || members.values().any(|m| m.len() < j) {
            continue;
        }
        let mut psu = vec![0u32; n];
        for units in members.values_mut() {
            units.sort_by(|&a, &b| x[[a, 0]].total_cmp(&x[[b, 0]]).then(a.cmp(&b)));
            let len = units.len();
            for (rank, &i) in units.iter().enumerate() {
                psu[i] = (rank * j / len) as u32 + 1;
            }
        }
        return FinitePopulation::new(x, y, z, stratum, psu);
    }
    Err(Error::InvalidPopulation(
        "could not fill every stratum with its PSUs in 100 attempts".into(),
    ))
}

/// `8` when the PSU mean of `z` is positive, `2` otherwise.
pub fn size_from_mean(mean_z: f64) -> f64 {
    if mean_z > 0.0 {
        8.0
    } else {
        2.0
    }
}

/// Measure of size of every PSU.
pub fn measure_of_size(pop: &FinitePopulation) -> BTreeMap<PsuKey, f64> {
    pop.psu_members()
        .into_iter()
        .map(|(key, units)| {
            let mean = units.iter().map(|&i| pop.z()[i]).sum::<f64>() / units.len() as f64;
            (key, size_from_mean(mean))
        })
        .collect()
}

/// Expected PSU count per stratum and second-stage sampling fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyPlan {
    pub expected_psus: f64,
    pub second_stage_fraction: f64,
}

/// Plan whose expected sample size is `TARGET_SAMPLING_RATE * size`.
///
/// With PSUs of about `size / (strata * psus_per_stratum)` units, each
/// selected PSU contributes `ceil(fraction * psu_size)` units, which fixes the
/// number of PSUs to select per stratum.
pub fn calibrated_plan(cfg: &PopulationConfig, second_stage_fraction: f64) -> SurveyPlan {
    let psu_size = cfg.size as f64 / (cfg.strata as f64 * cfg.psus_per_stratum as f64);
    let per_psu = (second_stage_fraction * psu_size - 1e-9).ceil().max(1.0);
    let target = TARGET_SAMPLING_RATE * cfg.size as f64;
    let expected = (target / (per_psu * cfg.strata as f64)).clamp(1.0, cfg.psus_per_stratum as f64);
    SurveyPlan {
        expected_psus: expected,
        second_stage_fraction,
    }
}

pub fn survey_design(pop: &FinitePopulation, plan: &SurveyPlan) -> DesignSpec {
    DesignSpec::TwoStage {
        expected_psus: pop
            .stratum_labels()
            .into_iter()
            .map(|h| (h, plan.expected_psus))
            .collect(),
        psu_size: measure_of_size(pop),
        second_stage_fraction: plan.second_stage_fraction,
    }
}

/// Stratified two-stage PPS-systematic / SRSWOR sample from `pop`.
pub fn apply_survey(pop: &FinitePopulation, plan: &SurveyPlan, seed: u64) -> Result<SurveySample> {
    draw_sample(pop, &survey_design(pop, plan), seed)
}

/// Law of `Y` given covariates with `Z` integrated out: Gaussian with mean
/// `a(x)` and covariance `noise + b(x) b(x)^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueConditional {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

pub fn true_conditional(x: &[f64], null_signal: bool) -> TrueConditional {
    let r = NOISE_CORRELATION;
    let (a, b) = if null_signal {
        ([0.0, 0.0], [0.0, 0.0])
    } else {
        let (x1, x2) = (x[0], x[1]);
        (
            [1.5 * x2 + 2.0 * x1, 1.5 * x2],
            [50.0 * x1, -(3.0 * x2 + 1.0)],
        )
    };
    TrueConditional {
        mean: a,
        covariance: [
            [1.0 + b[0] * b[0], r + b[0] * b[1]],
            [r + b[0] * b[1], 1.0 + b[1] * b[1]],
        ],
    }
}

impl TrueConditional {
    /// `n` independent draws, one per row.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let c = self.covariance;
        let l00 = c[0][0].sqrt();
        let l10 = c[1][0] / l00;
        let l11 = (c[1][1] - l10 * l10).max(0.0).sqrt();
        let mut out = Array2::zeros((n, 2));
        for i in 0..n {
            let e0: f64 = StandardNormal.sample(rng);
            let e1: f64 = StandardNormal.sample(rng);
            out[[i, 0]] = self.mean[0] + l00 * e0;
            out[[i, 1]] = self.mean[1] + l10 * e0 + l11 * e1;
        }
        out
    }
}
