//! Sampling designs and the draws that realize them.

use std::collections::BTreeMap;

use ndarray::Axis;
use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::population::{FinitePopulation, PsuKey};
use super::sample::{SampleDesign, SurveySample};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Redraw cap for selections that leave a stratum (or the sample) empty.
pub const MAX_REDRAWS: usize = 100;

/// Cumulative sums within this distance of an integer are snapped to it, so
/// probability vectors with integral totals select exactly that many units.
const SNAP: f64 = 1e-9;

/// A sampling design over a finite population.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    /// Independent Bernoulli selection with unit probabilities `pi`.
    Poisson { pi: Vec<f64> },
    /// Simple random sample of `n` units without replacement.
    Srswor { n: usize },
    /// Systematic selection with probabilities proportional to `size`,
    /// expected sample size `n`.
    PpsSystematic { n: f64, size: Vec<f64> },
    /// Stratified two-stage design: in each stratum, PSUs are drawn by
    /// systematic PPS on `psu_size` with expected count `expected_psus[h]`;
    /// within each selected PSU, `ceil(f * N_hj)` units are drawn by SRSWOR.
    TwoStage {
        expected_psus: BTreeMap<u32, f64>,
        psu_size: BTreeMap<PsuKey, f64>,
        second_stage_fraction: f64,
    },
}

/// Madow's systematic procedure with a uniform random start, applied in the
/// given order. Returns the selection indicator of every unit.
pub fn ups_systematic(pi: &[f64], seed: u64) -> Result<Vec<bool>> {
    let mut rng = rng::stream(seed);
    ups_systematic_with(pi, &mut rng)
}

pub fn ups_systematic_with<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> Result<Vec<bool>> {
    check_probabilities(pi, true)?;
    let start: f64 = rng.random();
    Ok(systematic_from_start(pi, start))
}

fn check_probabilities(pi: &[f64], allow_zero: bool) -> Result<()> {
    for (index, &value) in pi.iter().enumerate() {
        let ok = if allow_zero {
            (0.0..=1.0).contains(&value)
        } else {
            value > 0.0 && value <= 1.0
        };
        if !ok {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    Ok(())
}

fn snap(c: f64) -> f64 {
    let r = c.round();
    if (c - r).abs() < SNAP {
        r
    } else {
        c
    }
}

/// Unit `i` is selected when some `start + k` falls in `[C_{i-1}, C_i)`.
fn systematic_from_start(pi: &[f64], start: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(pi.len());
    let mut prev = 0.0f64;
    let mut cum = 0.0f64;
    for &p in pi {
        cum = snap(cum + p);
        let hits = (cum - start).ceil() - (prev - start).ceil();
        out.push(hits >= 1.0);
        prev = cum;
    }
    out
}

/// Inclusion probabilities proportional to `size` with expected total `n`.
///
/// Units whose proportional share exceeds one become certainty units and the
/// remaining expected count is redistributed over the others, repeating until
/// no probability exceeds one.
pub fn inclusion_probabilities(n: f64, size: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = size
        .iter()
        .enumerate()
        .find(|(_, s)| !(**s >= 0.0) || !s.is_finite())
    {
        return Err(Error::IncompatibleDesign(format!(
            "size measure {value} at position {index} is negative or not finite"
        )));
    }
    let positive = size.iter().filter(|&&s| s > 0.0).count();
    if !(n > 0.0) || n > positive as f64 + SNAP {
        return Err(Error::IncompatibleDesign(format!(
            "expected sample size {n} outside (0, {positive}]"
        )));
    }
    let mut pi = vec![0.0; size.len()];
    let mut certain = vec![false; size.len()];
    loop {
        let n_certain = certain.iter().filter(|&&c| c).count() as f64;
        let remaining = n - n_certain;
        let mass: f64 = size
            .iter()
            .zip(&certain)
            .filter(|(_, &c)| !c)
            .map(|(s, _)| s)
            .sum();
        let mut changed = false;
        for i in 0..size.len() {
            if certain[i] {
                pi[i] = 1.0;
                continue;
            }
            let p = if mass > 0.0 {
                remaining * size[i] / mass
            } else {
                0.0
            };
            if p >= 1.0 {
                certain[i] = true;
                pi[i] = 1.0;
                changed = true;
            } else {
                pi[i] = p;
            }
        }
        if !changed {
            return Ok(pi);
        }
    }
}

/// Draws a sample from `pop` under `design`.
///
/// Selections that leave the sample (or, for two-stage designs, any stratum)
/// empty are redrawn with a derived seed, at most [`MAX_REDRAWS`] times.
pub fn draw_sample(pop: &FinitePopulation, design: &DesignSpec, seed: u64) -> Result<SurveySample> {
    validate(pop, design)?;
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng::stream(rng::derive_path(
            seed,
            &[rng::label::SURVEY, attempt as u64],
        ));
        if let Some(sample) = draw_once(pop, design, &mut rng)? {
            return Ok(sample);
        }
    }
    Err(Error::EmptySelection {
        attempts: MAX_REDRAWS,
    })
}

fn validate(pop: &FinitePopulation, design: &DesignSpec) -> Result<()> {
    let n = pop.len();
    match design {
        DesignSpec::Poisson { pi } => {
            if pi.len() != n {
                return Err(Error::IncompatibleDesign(format!(
                    "{} probabilities for {n} units",
                    pi.len()
                )));
            }
            check_probabilities(pi, false)
        }
        DesignSpec::Srswor { n: k } => {
            if *k == 0 || *k > n {
                return Err(Error::IncompatibleDesign(format!(
                    "SRSWOR size {k} outside [1, {n}]"
                )));
            }
            Ok(())
        }
        DesignSpec::PpsSystematic { n: k, size } => {
            if size.len() != n {
                return Err(Error::IncompatibleDesign(format!(
                    "{} size measures for {n} units",
                    size.len()
                )));
            }
            inclusion_probabilities(*k, size).map(|_| ())
        }
        DesignSpec::TwoStage {
            expected_psus,
            psu_size,
            second_stage_fraction,
        } => {
            if !(*second_stage_fraction > 0.0 && *second_stage_fraction <= 1.0) {
                return Err(Error::IncompatibleDesign(format!(
                    "second-stage fraction {second_stage_fraction} outside (0, 1]"
                )));
            }
            for h in pop.stratum_labels() {
                let nh = expected_psus.get(&h).ok_or_else(|| {
                    Error::IncompatibleDesign(format!("no expected PSU count for stratum {h}"))
                })?;
                if *nh < 1.0 {
                    return Err(Error::IncompatibleDesign(format!(
                        "stratum {h}: expected PSU count {nh} below 1"
                    )));
                }
            }
            for key in pop.psu_members().keys() {
                if !psu_size.contains_key(key) {
                    return Err(Error::IncompatibleDesign(format!(
                        "no size measure for PSU {} in stratum {}",
                        key.psu, key.stratum
                    )));
                }
            }
            Ok(())
        }
    }
}

/// Number of second-stage draws for a PSU of `size` units.
pub fn second_stage_count(fraction: f64, size: usize) -> usize {
    // Guard against products like 0.3 * 10 = 3.0000000000000004.
    let raw = fraction * size as f64;
    let count = (raw - 1e-9).ceil().max(1.0) as usize;
    count.min(size)
}

fn draw_once(
    pop: &FinitePopulation,
    design: &DesignSpec,
    rng: &mut StreamRng,
) -> Result<Option<SurveySample>> {
    let n = pop.len();
    let (units, pi, sample_design): (Vec<usize>, Vec<f64>, SampleDesign) = match design {
        DesignSpec::Poisson { pi } => {
            let units: Vec<usize> = (0..n).filter(|&i| rng.random::<f64>() < pi[i]).collect();
            let p = units.iter().map(|&i| pi[i]).collect();
            (units, p, SampleDesign::Poisson)
        }
        DesignSpec::Srswor { n: k } => {
            let mut units = index::sample(rng, n, *k).into_vec();
            units.sort_unstable();
            let p = *k as f64 / n as f64;
            (
                units,
                vec![p; *k],
                SampleDesign::Srswor {
                    sample_size: *k,
                    population_size: n,
                },
            )
        }
        DesignSpec::PpsSystematic { n: k, size } => {
            let probs = inclusion_probabilities(*k, size)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let ordered: Vec<f64> = order.iter().map(|&i| probs[i]).collect();
            let hits = ups_systematic_with(&ordered, rng)?;
            let mut units: Vec<usize> = order
                .iter()
                .zip(&hits)
                .filter(|(_, &h)| h)
                .map(|(&i, _)| i)
                .collect();
            units.sort_unstable();
            let p = units.iter().map(|&i| probs[i]).collect();
            (units, p, SampleDesign::PpsSystematic)
        }
        DesignSpec::TwoStage {
            expected_psus,
            psu_size,
            second_stage_fraction,
        } => {
            let members = pop.psu_members();
            let mut by_stratum: BTreeMap<u32, Vec<PsuKey>> = BTreeMap::new();
            for key in members.keys() {
                by_stratum.entry(key.stratum).or_default().push(*key);
            }
            let mut picked: Vec<(usize, f64, f64)> = Vec::new();
            for (h, keys) in &by_stratum {
                let sizes: Vec<f64> = keys.iter().map(|k| psu_size[k]).collect();
                let pi1 = inclusion_probabilities(expected_psus[h], &sizes)?;
                let mut order: Vec<usize> = (0..keys.len()).collect();
                order.shuffle(rng);
                let ordered: Vec<f64> = order.iter().map(|&j| pi1[j]).collect();
                let hits = ups_systematic_with(&ordered, rng)?;
                let mut selected: Vec<usize> = order
                    .iter()
                    .zip(&hits)
                    .filter(|(_, &h)| h)
                    .map(|(&j, _)| j)
                    .collect();
                if selected.is_empty() {
                    return Ok(None);
                }
                selected.sort_unstable();
                for j in selected {
                    let psu_units = &members[&keys[j]];
                    let size = psu_units.len();
                    let m = second_stage_count(*second_stage_fraction, size);
                    let pi2 = m as f64 / size as f64;
                    for pos in index::sample(rng, size, m).into_iter() {
                        picked.push((psu_units[pos], pi1[j], pi2));
                    }
                }
            }
            picked.sort_unstable_by_key(|t| t.0);
            let units: Vec<usize> = picked.iter().map(|t| t.0).collect();
            let stage1: Vec<f64> = picked.iter().map(|t| t.1).collect();
            let stage2: Vec<f64> = picked.iter().map(|t| t.2).collect();
            let p = picked.iter().map(|t| t.1 * t.2).collect();
            (
                units,
                p,
                SampleDesign::TwoStage {
                    stage1_pi: stage1,
                    stage2_pi: stage2,
                },
            )
        }
    };
    if units.is_empty() {
        return Ok(None);
    }
    let x = pop.x().select(Axis(0), &units);
    let y = pop.y().select(Axis(0), &units);
    let stratum = units.iter().map(|&i| pop.strata()[i]).collect();
    let psu = units.iter().map(|&i| pop.psus()[i]).collect();
    let sample = SurveySample::new(x, y, pi, stratum, psu, sample_design)?.with_frame(units, n);
    Ok(Some(sample))
}

/// Analytic first-order inclusion probability of every population unit.
pub fn population_inclusion_probabilities(
    pop: &FinitePopulation,
    design: &DesignSpec,
) -> Result<Vec<f64>> {
    validate(pop, design)?;
    let n = pop.len();
    Ok(match design {
        DesignSpec::Poisson { pi } => pi.clone(),
        DesignSpec::Srswor { n: k } => vec![*k as f64 / n as f64; n],
        DesignSpec::PpsSystematic { n: k, size } => inclusion_probabilities(*k, size)?,
        DesignSpec::TwoStage {
            expected_psus,
            psu_size,
            second_stage_fraction,
        } => {
            let members = pop.psu_members();
            let mut out = vec![0.0; n];
            let mut by_stratum: BTreeMap<u32, Vec<PsuKey>> = BTreeMap::new();
            for key in members.keys() {
                by_stratum.entry(key.stratum).or_default().push(*key);
            }
            for (h, keys) in &by_stratum {
                let sizes: Vec<f64> = keys.iter().map(|k| psu_size[k]).collect();
                let pi1 = inclusion_probabilities(expected_psus[h], &sizes)?;
                for (j, key) in keys.iter().enumerate() {
                    let units = &members[key];
                    let m = second_stage_count(*second_stage_fraction, units.len());
                    let pi2 = m as f64 / units.len() as f64;
                    for &i in units {
                        out[i] = pi1[j] * pi2;
                    }
                }
            }
            out
        }
    })
}
