use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::population::PsuKey;
use crate::error::{Error, Result};

/// The design a sample was drawn under, as far as resampling needs to know it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleDesign {
    /// Independent Bernoulli selections with the recorded probabilities.
    Poisson,
    /// Fixed-size simple random sampling without replacement.
    Srswor {
        sample_size: usize,
        population_size: usize,
    },
    /// Unequal-probability systematic selection of units.
    PpsSystematic,
    /// PSUs drawn first, then units within selected PSUs.
    TwoStage {
        /// First-stage probability of each selected unit's PSU.
        stage1_pi: Vec<f64>,
        /// Conditional within-PSU probability of each selected unit.
        stage2_pi: Vec<f64>,
    },
}

/// Units selected from a finite population together with their design
/// metadata. Rows are stored directly so samples ingested from files need no
/// population frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySample {
    x: Array2<f64>,
    y: Array2<f64>,
    pi: Vec<f64>,
    stratum: Vec<u32>,
    psu: Vec<u32>,
    /// Frame positions of the selected units, when drawn from a population.
    units: Option<Vec<usize>>,
    design: SampleDesign,
    population_size: Option<usize>,
}

impl SurveySample {
    pub fn new(
        x: Array2<f64>,
        y: Array2<f64>,
        pi: Vec<f64>,
        stratum: Vec<u32>,
        psu: Vec<u32>,
        design: SampleDesign,
    ) -> Result<Self> {
        let n = pi.len();
        if n == 0 {
            return Err(Error::EmptySelection { attempts: 1 });
        }
        for (name, len) in [
            ("x", x.nrows()),
            ("y", y.nrows()),
            ("stratum", stratum.len()),
            ("psu", psu.len()),
        ] {
            if len != n {
                return Err(Error::InvalidPopulation(format!(
                    "`{name}` has {len} rows, expected {n}"
                )));
            }
        }
        if let Some((index, &value)) = pi
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p > 0.0 && **p <= 1.0))
        {
            return Err(Error::InvalidProbability { index, value });
        }
        if let SampleDesign::TwoStage {
            stage1_pi,
            stage2_pi,
        } = &design
        {
            if stage1_pi.len() != n || stage2_pi.len() != n {
                return Err(Error::IncompatibleDesign(
                    "two-stage probabilities must cover every selected unit".into(),
                ));
            }
            for i in 0..n {
                let (a, b) = (stage1_pi[i], stage2_pi[i]);
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::InvalidProbability { index: i, value: a });
                }
                if !(b > 0.0 && b <= 1.0) {
                    return Err(Error::InvalidProbability { index: i, value: b });
                }
                if ((a * b) - pi[i]).abs() > 1e-12 * pi[i].max(1e-300) + 1e-15 {
                    return Err(Error::IncompatibleDesign(format!(
                        "unit {i}: stage probabilities {a} * {b} do not multiply to {}",
                        pi[i]
                    )));
                }
            }
        }
        Ok(Self {
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
            pi,
            stratum,
            psu,
            units: None,
            design,
            population_size: None,
        })
    }

    /// Records the frame positions and size of the population drawn from.
    pub fn with_frame(mut self, units: Vec<usize>, population_size: usize) -> Self {
        debug_assert_eq!(units.len(), self.len());
        self.units = Some(units);
        self.population_size = Some(population_size);
        self
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn outcome_dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }

    pub fn covariates(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn outcome(&self, i: usize) -> ArrayView1<'_, f64> {
        self.y.row(i)
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Survey weights `1 / pi`.
    pub fn weights(&self) -> Vec<f64> {
        self.pi.iter().map(|p| 1.0 / p).collect()
    }

    pub fn strata(&self) -> &[u32] {
        &self.stratum
    }

    pub fn psus(&self) -> &[u32] {
        &self.psu
    }

    pub fn units(&self) -> Option<&[usize]> {
        self.units.as_deref()
    }

    pub fn design(&self) -> &SampleDesign {
        &self.design
    }

    pub fn population_size(&self) -> Option<usize> {
        self.population_size
    }

    pub fn psu_key(&self, i: usize) -> PsuKey {
        PsuKey::new(self.stratum[i], self.psu[i])
    }

    /// Selected units of every sampled PSU.
    pub fn psu_members(&self) -> BTreeMap<PsuKey, Vec<usize>> {
        let mut out: BTreeMap<PsuKey, Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            out.entry(self.psu_key(i)).or_default().push(i);
        }
        out
    }

    /// Selected units of every stratum.
    pub fn stratum_members(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &h) in self.stratum.iter().enumerate() {
            out.entry(h).or_default().push(i);
        }
        out
    }

    /// Number of distinct sampled PSUs.
    pub fn n_psus(&self) -> usize {
        self.psu_members().len()
    }
}
