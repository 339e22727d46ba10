use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use sdrf::forest::ForestConfig;

/// Errors surfaced to the user. Schema and configuration problems exit with
/// status 2, everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: sdrf::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => match source {
                sdrf::Error::Schema { .. }
                | sdrf::Error::InvalidWeights { .. }
                | sdrf::Error::Config(_) => 2,
                _ => 1,
            },
            CliError::Io { .. } => 1,
        }
    }
}

impl From<sdrf::Error> for CliError {
    fn from(source: sdrf::Error) -> Self {
        CliError::Core {
            context: "error".into(),
            source,
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, sdrf::Error> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core {
            context: what.into(),
            source,
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io {
            context: what.into(),
            source,
        })
    }
}

/// Parses a config file strictly; unknown keys are errors.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let is_toml = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Relative paths in a config file are taken relative to the file itself.
pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub population_size: usize,
    #[serde(default = "default_covariates")]
    pub covariates: usize,
    #[serde(default = "default_strata")]
    pub strata: u32,
    #[serde(default = "default_psu_size")]
    pub psu_size: f64,
    #[serde(default)]
    pub psus_per_stratum: Option<u32>,
    #[serde(default)]
    pub expected_psus: Option<f64>,
    #[serde(default = "default_fraction")]
    pub second_stage_fraction: f64,
    #[serde(default)]
    pub null_signal: bool,
}

fn default_covariates() -> usize {
    3
}
fn default_strata() -> u32 {
    4
}
fn default_psu_size() -> f64 {
    5.0
}
fn default_fraction() -> f64 {
    0.3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub sample: PathBuf,
    #[serde(default)]
    pub forest: ForestConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub queries: PathBuf,
    #[serde(default)]
    pub functionals: Functionals,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Functionals {
    pub mean: bool,
    pub covariance: bool,
    /// Levels in (0, 1); one column per level and outcome coordinate.
    pub quantiles: Vec<f64>,
    /// Points at which to evaluate the joint conditional CDF.
    pub cdf_at: Vec<Vec<f64>>,
    pub tolerance: Option<ToleranceConfig>,
}

impl Default for Functionals {
    fn default() -> Self {
        Self {
            mean: true,
            covariance: false,
            quantiles: Vec::new(),
            cdf_at: Vec::new(),
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub ridge: Option<f64>,
    /// Outcome grid on which membership flags are exported per query.
    #[serde(default)]
    pub outcome_grid: Option<OutcomeGrid>,
}

/// Regular grid over a box, `points` values per outcome coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: usize,
}

impl OutcomeGrid {
    pub fn validate(&self, dim: usize) -> Result<(), CliError> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(CliError::Config(format!(
                "outcome_grid bounds need {dim} entries"
            )));
        }
        if self.points < 2 || self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b)) {
            return Err(CliError::Config(
                "outcome_grid needs lower < upper and at least 2 points".into(),
            ));
        }
        let total = (self.points as f64).powi(dim as i32);
        if total > 1e6 {
            return Err(CliError::Config(format!(
                "outcome_grid has {total} points per query; limit is 1e6"
            )));
        }
        Ok(())
    }

    /// Grid points in row-major order, last coordinate fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.lower.len();
        let n = self.points;
        let axis = |k: usize, i: usize| {
            self.lower[k] + (self.upper[k] - self.lower[k]) * i as f64 / (n - 1) as f64
        };
        let mut out = Vec::with_capacity(n.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            out.push((0..d).map(|k| axis(k, idx[k])).collect());
            let mut k = d;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_enumerates_last_coordinate_fastest() {
        let g = OutcomeGrid {
            lower: vec![0.0, 10.0],
            upper: vec![1.0, 20.0],
            points: 3,
        };
        let pts = g.points();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], vec![0.0, 15.0]);
        assert_eq!(pts[3], vec![0.5, 10.0]);
        assert_eq!(pts[8], vec![1.0, 20.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err =
            serde_json::from_str::<FitConfig>(r#"{"sample": "a.csv", "n_tree": 3}"#).unwrap_err();
        assert!(err.to_string().contains("n_tree"));
        let err = toml::from_str::<FitConfig>("sample = \"a.csv\"\n[forest]\nmax_dept = 3\n")
            .unwrap_err();
        assert!(err.to_string().contains("max_dept"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let schema = sdrf::Error::Schema {
            column: "psu".into(),
            row: None,
            message: "missing".into(),
        };
        assert_eq!(CliError::from(schema).exit_code(), 2);
        assert_eq!(CliError::from(sdrf::Error::NoSupport).exit_code(), 1);
    }
}
