//! Pseudo-population bootstrap multipliers and the i.i.d. baseline.
//!
//! A draw clones every sampled unit by its survey weight into a synthetic
//! population, re-applies the original design to it, and turns the number of
//! selected clones of unit `i` into a multiplier `n*_i` with mean one.
//!
//! The normalizing constant is `c_hat_i * p_i`, where `p_i` is the probability
//! that a single clone is re-selected and `c_hat_i` is the expected number of
//! clones under the multinomial scheme or the realized number under the
//! floor-residual scheme (which never produces zero clones because `w >= 1`).
//! Either way `E[n*_i] = 1` holds exactly, averaged over the pseudo-population
//! as well as the re-selection.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::design::sample::{SampleDesign, SurveySample};
use crate::design::sampling::ups_systematic_with;
use crate::design::PsuKey;
use crate::error::{Error, Result};
use crate::rng::{self, label, StreamRng};

/// Redraw cap for draws in which every multiplier is zero.
pub const MAX_REDRAWS: usize = 100;

/// How sampled units are cloned into a pseudo-population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoScheme {
    /// Per stratum, `round(sum w)` clones allocated multinomially with
    /// probabilities `w_i / sum w`.
    #[default]
    Multinomial,
    /// `floor(w_i)` clones plus one more with probability `w_i - floor(w_i)`.
    FloorResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub scheme: PseudoScheme,
    /// Clone every sampled unit exactly once inside each PSU copy, resampling
    /// only at the PSU level.
    pub skip_second_stage: bool,
    /// Number of independent draws averaged into one multiplier vector.
    #[serde(alias = "average_M")]
    pub average_m: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            scheme: PseudoScheme::Multinomial,
            skip_second_stage: false,
            average_m: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    DesignBootstrap,
    IidMultinomial,
}

/// Per-unit resampling multipliers for one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleDraw {
    pub multipliers: Vec<f64>,
    pub scheme: ResampleScheme,
    pub seed: u64,
}

impl ResampleDraw {
    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }
}

/// A cloned sample: copy counts and the constants that normalize re-selected
/// clone counts into multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPopulation {
    n_units: usize,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    SingleStage {
        copies: Vec<u64>,
        /// `c_hat_i`.
        norm: Vec<f64>,
        strata: BTreeMap<u32, Vec<usize>>,
    },
    TwoStage {
        /// Sampled PSUs grouped by stratum.
        strata: BTreeMap<u32, Vec<PsuClones>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct PsuClones {
    members: Vec<usize>,
    pi1: f64,
    /// Expected (multinomial) or realized (floor-residual) PSU copy count.
    norm1: f64,
    copies: Vec<PsuCopy>,
}

#[derive(Debug, Clone, PartialEq)]
struct PsuCopy {
    /// Clone count of each member unit, aligned with `PsuClones::members`.
    unit_copies: Vec<u64>,
    unit_norm: Vec<f64>,
}

impl PseudoPopulation {
    /// Clone count of every sampled unit, summed over PSU copies.
    pub fn copies(&self) -> Vec<u64> {
        match &self.layout {
            Layout::SingleStage { copies, .. } => copies.clone(),
            Layout::TwoStage { strata } => {
                let mut out = vec![0u64; self.n_units];
                for psu in strata.values().flatten() {
                    for copy in &psu.copies {
                        for (k, &i) in psu.members.iter().enumerate() {
                            out[i] += copy.unit_copies[k];
                        }
                    }
                }
                out
            }
        }
    }

    /// Number of pseudo-units.
    pub fn total(&self) -> u64 {
        self.copies().iter().sum()
    }

    /// Number of PSU copies per stratum (two-stage only).
    pub fn psu_copies(&self) -> Option<BTreeMap<u32, usize>> {
        match &self.layout {
            Layout::SingleStage { .. } => None,
            Layout::TwoStage { strata } => Some(
                strata
                    .iter()
                    .map(|(h, psus)| (*h, psus.iter().map(|p| p.copies.len()).sum()))
                    .collect(),
            ),
        }
    }
}

/// Multinomial(total, probs) by sequential conditional binomials.
pub(crate) fn multinomial<R: Rng + ?Sized>(rng: &mut R, total: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut left = total;
    let mut mass: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = left;
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

/// Clone counts and normalizers for weights `w` (all `>= 1`). Units with
/// `w == 1` are certainty units and receive exactly one clone.
fn clone_counts(rng: &mut StreamRng, w: &[f64], scheme: PseudoScheme) -> (Vec<u64>, Vec<f64>) {
    let mut copies = vec![1u64; w.len()];
    let mut norm = vec![1.0; w.len()];
    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 1.0).collect();
    if free.is_empty() {
        return (copies, norm);
    }
    match scheme {
        PseudoScheme::Multinomial => {
            let fw: Vec<f64> = free.iter().map(|&i| w[i]).collect();
            let mass: f64 = fw.iter().sum();
            let total = mass.round().max(1.0);
            let draw = multinomial(rng, total as u64, &fw);
            for (k, &i) in free.iter().enumerate() {
                copies[i] = draw[k];
                norm[i] = total * fw[k] / mass;
            }
        }
        PseudoScheme::FloorResidual => {
            for &i in &free {
                let base = w[i].floor();
                let extra = rng.random::<f64>() < w[i] - base;
                copies[i] = base as u64 + extra as u64;
                norm[i] = copies[i] as f64;
            }
        }
    }
    (copies, norm)
}

fn check_weights(sample: &SurveySample) -> Result<()> {
    // pi <= 1 is enforced by SurveySample, so every weight is at least one;
    // guard against rounding in ingested files all the same.
    for (row, w) in sample.weights().into_iter().enumerate() {
        if !(w >= 1.0) || !w.is_finite() {
            return Err(Error::InvalidWeights { row, value: w });
        }
    }
    Ok(())
}

/// Clones the sample into a pseudo-population. Each stratum is cloned
/// separately; two-stage samples are cloned PSU-first, then units within each
/// PSU copy.
pub fn build_pseudo_population(
    sample: &SurveySample,
    config: &BootstrapConfig,
    seed: u64,
) -> Result<PseudoPopulation> {
    check_weights(sample)?;
    let mut rng = rng::stream(rng::derive(seed, label::PSEUDO));
    let layout = match sample.design() {
        SampleDesign::TwoStage {
            stage1_pi,
            stage2_pi,
        } => {
            let mut by_stratum: BTreeMap<u32, Vec<(PsuKey, Vec<usize>)>> = BTreeMap::new();
            for (key, members) in sample.psu_members() {
                by_stratum
                    .entry(key.stratum)
                    .or_default()
                    .push((key, members));
            }
            let mut strata = BTreeMap::new();
            for (h, psus) in by_stratum {
                let w1: Vec<f64> = psus.iter().map(|(_, m)| 1.0 / stage1_pi[m[0]]).collect();
                let (psu_copies, psu_norm) = clone_counts(&mut rng, &w1, config.scheme);
                let mut groups = Vec::with_capacity(psus.len());
                for (j, (_, members)) in psus.into_iter().enumerate() {
                    let w2: Vec<f64> = members.iter().map(|&i| 1.0 / stage2_pi[i]).collect();
                    let copies = (0..psu_copies[j])
                        .map(|_| {
                            if config.skip_second_stage {
                                PsuCopy {
                                    unit_copies: vec![1; members.len()],
                                    unit_norm: vec![1.0; members.len()],
                                }
                            } else {
                                let (unit_copies, unit_norm) =
                                    clone_counts(&mut rng, &w2, config.scheme);
                                PsuCopy {
                                    unit_copies,
                                    unit_norm,
                                }
                            }
                        })
                        .collect();
                    groups.push(PsuClones {
                        pi1: stage1_pi[members[0]],
                        norm1: psu_norm[j],
                        members,
                        copies,
                    });
                }
                strata.insert(h, groups);
            }
            Layout::TwoStage { strata }
        }
        _ => {
            let w = sample.weights();
            let strata = sample.stratum_members();
            let mut copies = vec![0u64; sample.len()];
            let mut norm = vec![0.0; sample.len()];
            for members in strata.values() {
                let sw: Vec<f64> = members.iter().map(|&i| w[i]).collect();
                let (c, nrm) = clone_counts(&mut rng, &sw, config.scheme);
                for (k, &i) in members.iter().enumerate() {
                    copies[i] = c[k];
                    norm[i] = nrm[k];
                }
            }
            Layout::SingleStage {
                copies,
                norm,
                strata,
            }
        }
    };
    Ok(PseudoPopulation {
        n_units: sample.len(),
        layout,
    })
}

/// Expands clone counts into a list of owners, one entry per clone.
fn clone_owners(members: &[usize], copies: &[u64]) -> Vec<usize> {
    let mut out = Vec::with_capacity(copies.iter().sum::<u64>() as usize);
    for (k, &c) in copies.iter().enumerate() {
        out.extend(std::iter::repeat_n(members[k], c as usize));
    }
    out
}

fn reapply(
    pseudo: &PseudoPopulation,
    sample: &SurveySample,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    let n = sample.len();
    let pi = sample.pi();
    let mut out = vec![0.0; n];
    match (&pseudo.layout, sample.design()) {
        (
            Layout::SingleStage {
                copies,
                norm,
                strata,
            },
            design,
        ) => match design {
            SampleDesign::Poisson => {
                for i in 0..n {
                    if copies[i] == 0 {
                        continue;
                    }
                    let s = if pi[i] >= 1.0 {
                        copies[i]
                    } else {
                        Binomial::new(copies[i], pi[i])
                            .expect("valid binomial")
                            .sample(rng)
                    };
                    out[i] = s as f64 / (norm[i] * pi[i]);
                }
            }
            SampleDesign::PpsSystematic => {
                for members in strata.values() {
                    let c: Vec<u64> = members.iter().map(|&i| copies[i]).collect();
                    let mut owners = clone_owners(members, &c);
                    owners.shuffle(rng);
                    let probs: Vec<f64> = owners.iter().map(|&i| pi[i]).collect();
                    let hits = ups_systematic_with(&probs, rng)?;
                    for (&i, &hit) in owners.iter().zip(&hits) {
                        if hit {
                            out[i] += 1.0;
                        }
                    }
                }
                for i in 0..n {
                    out[i] /= norm[i] * pi[i];
                }
            }
            SampleDesign::Srswor { sample_size, .. } => {
                let members: Vec<usize> = (0..n).collect();
                let owners = clone_owners(&members, copies);
                let total = owners.len();
                let take = (*sample_size).min(total);
                for pos in index::sample(rng, total, take).into_iter() {
                    out[owners[pos]] += 1.0;
                }
                let p = take as f64 / total as f64;
                for i in 0..n {
                    out[i] /= norm[i] * p;
                }
            }
            SampleDesign::TwoStage { .. } => {
                return Err(Error::IncompatibleDesign(
                    "pseudo-population was built for a single-stage design".into(),
                ))
            }
        },
        (Layout::TwoStage { strata }, SampleDesign::TwoStage { .. }) => {
            for psus in strata.values() {
                // One entry per PSU copy: (group, copy).
                let mut order: Vec<(usize, usize)> = psus
                    .iter()
                    .enumerate()
                    .flat_map(|(g, p)| (0..p.copies.len()).map(move |k| (g, k)))
                    .collect();
                order.shuffle(rng);
                let probs: Vec<f64> = order.iter().map(|&(g, _)| psus[g].pi1).collect();
                let hits = ups_systematic_with(&probs, rng)?;
                for (&(g, k), &hit) in order.iter().zip(&hits) {
                    if !hit {
                        continue;
                    }
                    let group = &psus[g];
                    let copy = &group.copies[k];
                    let local: Vec<usize> = (0..group.members.len()).collect();
                    let owners = clone_owners(&local, &copy.unit_copies);
                    let total = owners.len();
                    if total == 0 {
                        continue;
                    }
                    let take = group.members.len().min(total);
                    let mut s = vec![0u64; group.members.len()];
                    for pos in index::sample(rng, total, take).into_iter() {
                        s[owners[pos]] += 1;
                    }
                    let p2 = take as f64 / total as f64;
                    let outer = group.pi1 * group.norm1;
                    for (k, &i) in group.members.iter().enumerate() {
                        if s[k] > 0 {
                            out[i] += s[k] as f64 / (p2 * copy.unit_norm[k] * outer);
                        }
                    }
                }
            }
        }
        (Layout::TwoStage { .. }, _) => {
            return Err(Error::IncompatibleDesign(
                "pseudo-population was built for a two-stage design".into(),
            ))
        }
    }
    Ok(out)
}

/// Re-applies the sample's design to `pseudo` and normalizes re-selected clone
/// counts into multipliers. Draws with every multiplier zero are redrawn with
/// a derived seed.
pub fn draw_multipliers(
    pseudo: &PseudoPopulation,
    sample: &SurveySample,
    seed: u64,
) -> Result<ResampleDraw> {
    if pseudo.n_units != sample.len() {
        return Err(Error::MismatchedDraws(format!(
            "pseudo-population covers {} units, sample has {}",
            pseudo.n_units,
            sample.len()
        )));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng::stream(rng::derive_path(seed, &[label::REAPPLY, attempt as u64]));
        let multipliers = reapply(pseudo, sample, &mut rng)?;
        if multipliers.iter().any(|&m| m > 0.0) {
            return Ok(ResampleDraw {
                multipliers,
                scheme: ResampleScheme::DesignBootstrap,
                seed,
            });
        }
    }
    Err(Error::DegenerateDraw {
        attempts: MAX_REDRAWS,
    })
}

/// One complete bootstrap draw: a fresh pseudo-population followed by a
/// re-application of the design, averaged over `config.average_m` draws.
pub fn resample(
    sample: &SurveySample,
    config: &BootstrapConfig,
    seed: u64,
) -> Result<ResampleDraw> {
    if config.average_m == 0 {
        return Err(Error::Config(
            "bootstrap.average_m must be at least 1".into(),
        ));
    }
    let draws = (0..config.average_m)
        .map(|m| {
            let s = rng::derive_path(seed, &[label::AVERAGE, m as u64]);
            let pseudo = build_pseudo_population(sample, config, s)?;
            draw_multipliers(&pseudo, sample, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut avg = average_multipliers(&draws)?;
    avg.seed = seed;
    Ok(avg)
}

/// Unit-wise mean of `draws`.
pub fn average_multipliers(draws: &[ResampleDraw]) -> Result<ResampleDraw> {
    let first = draws
        .first()
        .ok_or_else(|| Error::MismatchedDraws("no draws to average".into()))?;
    if draws.len() == 1 {
        return Ok(first.clone());
    }
    let n = first.len();
    let mut sum = vec![0.0; n];
    for d in draws {
        if d.len() != n || d.scheme != first.scheme {
            return Err(Error::MismatchedDraws(format!(
                "draw over {} units ({:?}) does not match {} units ({:?})",
                d.len(),
                d.scheme,
                n,
                first.scheme
            )));
        }
        for (s, m) in sum.iter_mut().zip(&d.multipliers) {
            *s += m;
        }
    }
    let m = draws.len() as f64;
    Ok(ResampleDraw {
        multipliers: sum.into_iter().map(|s| s / m).collect(),
        scheme: first.scheme,
        seed: first.seed,
    })
}

/// Efron's bootstrap: counts from Multinomial(n_s, uniform).
pub fn iid_multipliers(n_s: usize, seed: u64) -> ResampleDraw {
    let mut rng = rng::stream(rng::derive(seed, label::RESAMPLE));
    let counts = multinomial(&mut rng, n_s as u64, &vec![1.0; n_s]);
    ResampleDraw {
        multipliers: counts.into_iter().map(|c| c as f64).collect(),
        scheme: ResampleScheme::IidMultinomial,
        seed,
    }
}
