use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Globally unique PSU identity: PSU labels are only unique within a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PsuKey {
    pub stratum: u32,
    pub psu: u32,
}

impl PsuKey {
    pub fn new(stratum: u32, psu: u32) -> Self {
        Self { stratum, psu }
    }
}

/// The universe of `N` units a sample is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePopulation {
    x: Array2<f64>,
    y: Array2<f64>,
    z: Vec<f64>,
    stratum: Vec<u32>,
    psu: Vec<u32>,
}

impl FinitePopulation {
    pub fn new(
        x: Array2<f64>,
        y: Array2<f64>,
        z: Vec<f64>,
        stratum: Vec<u32>,
        psu: Vec<u32>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::InvalidPopulation("population is empty".into()));
        }
        for (name, len) in [
            ("y", y.nrows()),
            ("z", z.len()),
            ("stratum", stratum.len()),
            ("psu", psu.len()),
        ] {
            if len != n {
                return Err(Error::InvalidPopulation(format!(
                    "`{name}` has {len} rows, covariates have {n}"
                )));
            }
        }
        if y.ncols() == 0 {
            return Err(Error::InvalidPopulation("no outcome columns".into()));
        }
        Ok(Self {
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
            z,
            stratum,
            psu,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
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

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn strata(&self) -> &[u32] {
        &self.stratum
    }

    pub fn psus(&self) -> &[u32] {
        &self.psu
    }

    pub fn covariates(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn psu_key(&self, i: usize) -> PsuKey {
        PsuKey::new(self.stratum[i], self.psu[i])
    }

    /// Member units of every PSU, in ascending unit order.
    pub fn psu_members(&self) -> BTreeMap<PsuKey, Vec<usize>> {
        let mut out: BTreeMap<PsuKey, Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            out.entry(self.psu_key(i)).or_default().push(i);
        }
        out
    }

    /// Sorted distinct stratum labels.
    pub fn stratum_labels(&self) -> Vec<u32> {
        let mut s = self.stratum.clone();
        s.sort_unstable();
        s.dedup();
        s
    }
}
