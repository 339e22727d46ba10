use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapConfig;
use crate::design::SurveySample;
use crate::error::{Error, Result};

/// Deeper trees would exceed the nesting the JSON reader accepts.
pub const MAX_DEPTH_LIMIT: usize = 40;

/// Survey-aware fitting, or the naive baseline that ignores the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Design weights, pseudo-population bootstrap, PSU-level honesty.
    #[default]
    Survey,
    /// Unit weights, i.i.d. bootstrap, unit-level honesty.
    Naive,
}

/// User-facing forest hyperparameters. Unset fields are resolved from the
/// training sample by [`ForestConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Probability that a PSU is assigned to the split side.
    pub q: f64,
    pub max_depth: usize,
    /// Defaults to `max(20, ceil(sqrt(n_s)))`.
    pub min_node_size: Option<usize>,
    /// Defaults to 5.5 times the ratio of the largest to the smallest design
    /// weight in survey mode, and to no bound in naive mode.
    pub max_weight_ratio: Option<f64>,
    /// Defaults to `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    pub threshold_grid: usize,
    pub min_gain: f64,
    /// Kernel bandwidth; median heuristic when unset.
    pub bandwidth: Option<f64>,
    /// Random Fourier feature dimension; zero selects the exact split score.
    pub rff_dim: usize,
    pub bootstrap: BootstrapConfig,
    pub mode: ForestMode,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            q: 0.5,
            max_depth: 8,
            min_node_size: None,
            max_weight_ratio: None,
            mtry: None,
            threshold_grid: 64,
            min_gain: 1e-12,
            bandwidth: None,
            rff_dim: 0,
            bootstrap: BootstrapConfig::default(),
            mode: ForestMode::Survey,
            seed: 0,
        }
    }
}

/// Concrete tree-growing parameters after defaults are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    pub q: f64,
    pub max_depth: usize,
    pub min_node_size: usize,
    /// `f64::INFINITY` disables the guard; serialized as `null`.
    #[serde(with = "unbounded")]
    pub max_weight_ratio: f64,
    pub mtry: usize,
    pub threshold_grid: usize,
    pub min_gain: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q = {} outside (0, 1)", self.q));
        }
        if self.max_depth == 0 || self.max_depth > MAX_DEPTH_LIMIT {
            return bad(format!(
                "max_depth = {} outside [1, {MAX_DEPTH_LIMIT}]",
                self.max_depth
            ));
        }
        if self.min_node_size == Some(0) {
            return bad("min_node_size must be at least 1".into());
        }
        if let Some(r) = self.max_weight_ratio {
            if !(r >= 1.0) {
                return bad(format!("max_weight_ratio = {r} below 1"));
            }
        }
        if self.mtry == Some(0) {
            return bad("mtry must be at least 1".into());
        }
        if self.threshold_grid == 0 {
            return bad("threshold_grid must be at least 1".into());
        }
        if !(self.min_gain >= 0.0) {
            return bad(format!("min_gain = {} is negative", self.min_gain));
        }
        if let Some(b) = self.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("bandwidth = {b} is not positive"));
            }
        }
        if self.rff_dim % 2 == 1 {
            return bad(format!("rff_dim = {} must be even", self.rff_dim));
        }
        if self.bootstrap.average_m == 0 {
            return bad("bootstrap.average_m must be at least 1".into());
        }
        Ok(())
    }

    pub fn resolve(&self, sample: &SurveySample) -> Result<TreeParams> {
        self.validate()?;
        let p = sample.n_covariates();
        if p == 0 {
            return Err(Error::Config("sample has no covariates".into()));
        }
        let mtry = self
            .mtry
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
        if mtry > p {
            return Err(Error::Config(format!(
                "mtry = {mtry} exceeds {p} covariates"
            )));
        }
        let min_node_size = self
            .min_node_size
            .unwrap_or_else(|| 20usize.max((sample.len() as f64).sqrt().ceil() as usize));
        let max_weight_ratio = match (self.max_weight_ratio, self.mode) {
            (Some(r), _) => r,
            (None, ForestMode::Naive) => f64::INFINITY,
            (None, ForestMode::Survey) => {
                let w = sample.weights();
                let hi = w.iter().copied().fold(f64::MIN, f64::max);
                let lo = w.iter().copied().fold(f64::MAX, f64::min);
                5.5 * hi / lo
            }
        };
        Ok(TreeParams {
            q: self.q,
            max_depth: self.max_depth,
            min_node_size,
            max_weight_ratio,
            mtry,
            threshold_grid: self.threshold_grid,
            min_gain: self.min_gain,
        })
    }
}
