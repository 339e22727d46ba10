use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{self, PopulationConfig, SurveyPlan};
use crate::design::SurveySample;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, Forest, ForestConfig, ForestMode};
use crate::kernel::KernelSpec;
use crate::rng::{self, label};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Survey-weighted forest.
    Sdrf,
    /// Forest that ignores the design.
    Drf,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sdrf => "sdrf",
            Method::Drf => "drf",
        }
    }

    fn mode(self) -> ForestMode {
        match self {
            Method::Sdrf => ForestMode::Survey,
            Method::Drf => ForestMode::Naive,
        }
    }
}

/// Benchmark configuration. Every population size is crossed with every
/// method and seed; tree counts are evaluated as prefixes of one forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub population_sizes: Vec<usize>,
    pub trees: Vec<usize>,
    /// Explicit replication seeds; when empty, `replications` consecutive
    /// seeds starting at the master seed are used.
    pub seeds: Vec<u64>,
    pub replications: usize,
    pub covariates: usize,
    pub strata: u32,
    /// Average number of population units per PSU; ignored when
    /// `psus_per_stratum` is set.
    pub psu_size: f64,
    pub psus_per_stratum: Option<u32>,
    /// Expected PSUs selected per stratum; calibrated to the target sampling
    /// rate when unset.
    pub expected_psus: Option<f64>,
    pub second_stage_fraction: f64,
    pub null_signal: bool,
    pub methods: Vec<Method>,
    pub mmd: bool,
    pub rmse: bool,
    pub mmd_grid: usize,
    pub reference_draws: usize,
    pub rmse_grid: usize,
    pub rmse_pairs: usize,
    /// Forest hyperparameters. `n_trees`, `mode` and `seed` are set per run.
    pub forest: ForestConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            population_sizes: vec![4000],
            trees: vec![30],
            seeds: Vec::new(),
            replications: 3,
            covariates: 3,
            strata: 4,
            psu_size: 5.0,
            psus_per_stratum: None,
            expected_psus: None,
            second_stage_fraction: 0.3,
            null_signal: false,
            methods: vec![Method::Sdrf, Method::Drf],
            mmd: true,
            rmse: true,
            mmd_grid: 50,
            reference_draws: 2000,
            rmse_grid: 200,
            rmse_pairs: 10,
            forest: ForestConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.population_sizes.is_empty() || self.trees.is_empty() || self.methods.is_empty() {
            return bad("population_sizes, trees and methods must be nonempty");
        }
        if self.trees.contains(&0) {
            return bad("tree counts must be positive");
        }
        if self.seeds.is_empty() && self.replications == 0 {
            return bad("need at least one seed or replication");
        }
        if !(self.second_stage_fraction > 0.0 && self.second_stage_fraction <= 1.0) {
            return bad("second_stage_fraction must lie in (0, 1]");
        }
        if !(self.psu_size >= 1.0) || !self.psu_size.is_finite() {
            return bad("psu_size must be at least 1");
        }
        if let Some(n) = self.expected_psus {
            if !(n >= 1.0) || !n.is_finite() {
                return bad("expected_psus must be at least 1");
            }
        }
        if self.mmd && (self.mmd_grid == 0 || self.reference_draws == 0) {
            return bad("mmd_grid and reference_draws must be positive");
        }
        if self.rmse && (self.rmse_grid < 2 || self.rmse_pairs == 0) {
            return bad("rmse_grid must be at least 2 and rmse_pairs positive");
        }
        for &n in &self.population_sizes {
            self.population_config(n).validate()?;
        }
        let mut forest = self.forest.clone();
        forest.n_trees = self.max_trees();
        forest.validate()
    }

    pub fn population_config(&self, size: usize) -> PopulationConfig {
        let per_stratum = self.psus_per_stratum.unwrap_or_else(|| {
            ((size as f64 / (self.strata as f64 * self.psu_size)).round() as u32).max(1)
        });
        PopulationConfig {
            size,
            covariates: self.covariates,
            strata: self.strata,
            psus_per_stratum: per_stratum,
            null_signal: self.null_signal,
        }
    }

    pub fn survey_plan(&self, size: usize) -> SurveyPlan {
        let pop = self.population_config(size);
        match self.expected_psus {
            Some(n) => SurveyPlan {
                expected_psus: n.min(pop.psus_per_stratum as f64),
                second_stage_fraction: self.second_stage_fraction,
            },
            None => dgp::calibrated_plan(&pop, self.second_stage_fraction),
        }
    }

    /// Replication seeds in run order.
    pub fn seed_list(&self, master: u64) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.replications as u64)
                .map(|r| master.wrapping_add(r))
                .collect()
        } else {
            self.seeds.clone()
        }
    }

    fn sorted_trees(&self) -> Vec<usize> {
        let mut t = self.trees.clone();
        t.sort_unstable();
        t.dedup();
        t
    }

    fn max_trees(&self) -> usize {
        self.trees.iter().copied().max().unwrap_or(1)
    }
}

/// One seed, method, population size and tree count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub method: Method,
    pub population_size: usize,
    pub trees: usize,
    pub sample_size: usize,
    /// 100 times the mean MMD over the covariate grid.
    pub mmd: Option<f64>,
    pub rmse: Option<f64>,
    /// Grid points skipped because no tree had support there.
    pub unsupported: usize,
}

/// Estimate of `E[Y1 | x1]` at every RMSE grid point for one row; `None`
/// where the forest had no support.
#[derive(Debug, Clone, PartialEq)]
struct CurveRow {
    key: GroupKey,
    values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub method: Method,
    pub population_size: usize,
    pub trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub population_size: usize,
    pub trees: usize,
    pub replications: usize,
    pub sample_size_mean: f64,
    pub mmd_mean: Option<f64>,
    pub mmd_sd: Option<f64>,
    pub rmse_mean: Option<f64>,
    pub rmse_sd: Option<f64>,
}

/// Across-seed summary of the curve estimate at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRow {
    pub method: Method,
    pub population_size: usize,
    pub trees: usize,
    pub x1: f64,
    pub truth: f64,
    pub mean_estimate: f64,
    pub mse: f64,
    pub sd: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub population_size: usize,
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<Aggregate>,
    pub pointwise: Vec<PointwiseRow>,
    pub failures: Vec<Failure>,
}

/// Covariate points shared by all methods of one seed.
struct EvaluationPlan {
    mmd_points: Vec<Vec<f64>>,
    references: Vec<Array2<f64>>,
    rmse_x1: Vec<f64>,
    rmse_pairs: Vec<[f64; 2]>,
}

fn evaluation_plan(cfg: &ExperimentConfig, seed: u64) -> EvaluationPlan {
    let mut rng = rng::stream(rng::derive_path(seed, &[label::EVALUATION, 0]));
    let mut mmd_points = Vec::new();
    let mut references = Vec::new();
    if cfg.mmd {
        for _ in 0..cfg.mmd_grid {
            let x = dgp::draw_covariates(&mut rng, cfg.covariates);
            references.push(
                dgp::true_conditional(&x, cfg.null_signal).sample(cfg.reference_draws, &mut rng),
            );
            mmd_points.push(x);
        }
    }
    let mut rng = rng::stream(rng::derive_path(seed, &[label::EVALUATION, 1]));
    let rmse_pairs = (0..cfg.rmse_pairs)
        .map(|k| {
            [
                if k % 2 == 0 { 1.0 } else { -1.0 },
                StandardNormal.sample(&mut rng),
            ]
        })
        .collect();
    EvaluationPlan {
        mmd_points,
        references,
        rmse_x1: rmse_grid(cfg.rmse_grid),
        rmse_pairs,
    }
}

fn rmse_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn query(x1: f64, pair: &[f64; 2], p: usize) -> Vec<f64> {
    let mut x = vec![0.0; p];
    x[0] = x1;
    x[1] = pair[0];
    if p > 2 {
        x[2] = pair[1];
    }
    x
}

/// Mean of `k(a, b)` over all pairs of rows, computed once per reference.
fn reference_self_term(reference: &Array2<f64>, kernel: &KernelSpec) -> f64 {
    let n = reference.nrows();
    let rows: Vec<&[f64]> = reference
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("standard layout"))
        .collect();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..i {
            off += kernel.eval(rows[i], rows[j]);
        }
    }
    (2.0 * off + n as f64) / (n * n) as f64
}

/// 100 x mean MMD over the grid after each tree-count checkpoint.
fn mmd_by_prefix(
    forest: &Forest,
    plan: &EvaluationPlan,
    checkpoints: &[usize],
) -> Result<Vec<(f64, usize)>> {
    // The evaluation kernel is always exact, with the forest's bandwidth.
    let kernel = KernelSpec::gaussian(forest.kernel().bandwidth(), forest.kernel().dim())?;
    let y = forest.sample().y();
    let n = y.nrows();
    let rows: Vec<&[f64]> = y
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("standard layout"))
        .collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval(rows[i], rows[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let mut sums = vec![0.0; checkpoints.len()];
    let mut counts = vec![0usize; checkpoints.len()];
    for (x, reference) in plan.mmd_points.iter().zip(&plan.references) {
        let weights = forest.weights_at_prefixes(x, checkpoints)?;
        if weights.iter().all(Option::is_none) {
            continue;
        }
        let m = reference.nrows() as f64;
        let cross: Vec<f64> = rows
            .iter()
            .map(|yi| {
                reference
                    .rows()
                    .into_iter()
                    .map(|r| kernel.eval(yi, r.to_slice().unwrap()))
                    .sum::<f64>()
                    / m
            })
            .collect();
        let qq = reference_self_term(reference, &kernel);
        for (c, w) in weights.iter().enumerate() {
            let Some(w) = w else { continue };
            let support: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
            let mut pp = 0.0;
            let mut pq = 0.0;
            for &i in &support {
                let row = &gram[i * n..(i + 1) * n];
                pp += w[i] * support.iter().map(|&j| w[j] * row[j]).sum::<f64>();
                pq += w[i] * cross[i];
            }
            let mmd2 = (pp - 2.0 * pq + qq).max(0.0);
            sums[c] += 100.0 * mmd2.sqrt();
            counts[c] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &k)| {
            (
                if k == 0 { f64::NAN } else { s / k as f64 },
                plan.mmd_points.len() - k,
            )
        })
        .collect())
}

/// Curve of `E[Y1 | x1]` estimates after each checkpoint: the forest mean
/// averaged over the fixed covariate pairs that have support.
fn curves_by_prefix(
    forest: &Forest,
    plan: &EvaluationPlan,
    checkpoints: &[usize],
) -> Result<Vec<Vec<Option<f64>>>> {
    let p = forest.sample().n_covariates();
    let mut out = vec![Vec::with_capacity(plan.rmse_x1.len()); checkpoints.len()];
    for &x1 in &plan.rmse_x1 {
        let mut sums = vec![0.0; checkpoints.len()];
        let mut counts = vec![0usize; checkpoints.len()];
        for pair in &plan.rmse_pairs {
            for (c, m) in forest
                .mean_at_prefixes(&query(x1, pair, p), checkpoints)?
                .into_iter()
                .enumerate()
            {
                if let Some(m) = m {
                    sums[c] += m[0];
                    counts[c] += 1;
                }
            }
        }
        for c in 0..checkpoints.len() {
            out[c].push((counts[c] > 0).then(|| sums[c] / counts[c] as f64));
        }
    }
    Ok(out)
}

/// Truth for the RMSE curve: `E[Y1 | x1] = 2 x1`, or zero without signal.
fn curve_truth(x1: f64, null_signal: bool) -> f64 {
    if null_signal {
        0.0
    } else {
        2.0 * x1
    }
}

fn rmse(curve: &[Option<f64>], x1: &[f64], null_signal: bool) -> (Option<f64>, usize) {
    let errors: Vec<f64> = curve
        .iter()
        .zip(x1)
        .filter_map(|(v, &x)| v.map(|v| (v - curve_truth(x, null_signal)).powi(2)))
        .collect();
    let skipped = curve.len() - errors.len();
    if errors.is_empty() {
        (None, skipped)
    } else {
        (Some(stats::mean(&errors).sqrt()), skipped)
    }
}

struct SeedOutcome {
    rows: Vec<MetricsRow>,
    curves: Vec<(u64, CurveRow)>,
    failures: Vec<Failure>,
}

fn draw_survey(cfg: &ExperimentConfig, seed: u64, size: usize) -> Result<SurveySample> {
    let pop = dgp::generate_population(
        &cfg.population_config(size),
        rng::derive_path(seed, &[label::POPULATION, size as u64]),
    )?;
    dgp::apply_survey(
        &pop,
        &cfg.survey_plan(size),
        rng::derive_path(seed, &[label::SURVEY, size as u64]),
    )
}

fn run_method(
    cfg: &ExperimentConfig,
    sample: &SurveySample,
    plan: &EvaluationPlan,
    seed: u64,
    size: usize,
    method: Method,
) -> Result<(Vec<MetricsRow>, Vec<CurveRow>)> {
    let checkpoints = cfg.sorted_trees();
    let mut forest_cfg = cfg.forest.clone();
    forest_cfg.n_trees = cfg.max_trees();
    forest_cfg.mode = method.mode();
    forest_cfg.seed = rng::derive_path(seed, &[label::FOREST, size as u64]);
    let forest = fit_forest(sample, &forest_cfg)?;
    let mmd = if cfg.mmd {
        Some(mmd_by_prefix(&forest, plan, &checkpoints)?)
    } else {
        None
    };
    let curves = if cfg.rmse {
        Some(curves_by_prefix(&forest, plan, &checkpoints)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut curve_rows = Vec::new();
    for (c, &trees) in checkpoints.iter().enumerate() {
        let key = GroupKey {
            method,
            population_size: size,
            trees,
        };
        let (mmd_value, mmd_skipped) = match &mmd {
            Some(v) => (Some(v[c].0).filter(|m| m.is_finite()), v[c].1),
            None => (None, 0),
        };
        let (rmse_value, rmse_skipped) = match &curves {
            Some(curves) => rmse(&curves[c], &plan.rmse_x1, cfg.null_signal),
            None => (None, 0),
        };
        rows.push(MetricsRow {
            seed,
            method,
            population_size: size,
            trees,
            sample_size: sample.len(),
            mmd: mmd_value,
            rmse: rmse_value,
            unsupported: mmd_skipped + rmse_skipped,
        });
        if let Some(curves) = &curves {
            curve_rows.push(CurveRow {
                key,
                values: curves[c].clone(),
            });
        }
    }
    Ok((rows, curve_rows))
}

fn run_seed(cfg: &ExperimentConfig, seed: u64, size: usize) -> SeedOutcome {
    let mut out = SeedOutcome {
        rows: Vec::new(),
        curves: Vec::new(),
        failures: Vec::new(),
    };
    let sample = match draw_survey(cfg, seed, size) {
        Ok(s) => s,
        Err(e) => {
            out.failures.push(Failure {
                seed,
                population_size: size,
                method: None,
                message: e.to_string(),
            });
            return out;
        }
    };
    let plan = evaluation_plan(
        cfg,
        rng::derive_path(seed, &[label::EVALUATION, size as u64]),
    );
    for &method in &cfg.methods {
        match run_method(cfg, &sample, &plan, seed, size, method) {
            Ok((rows, curves)) => {
                out.rows.extend(rows);
                out.curves.extend(curves.into_iter().map(|c| (seed, c)));
            }
            Err(e) => out.failures.push(Failure {
                seed,
                population_size: size,
                method: Some(method),
                message: e.to_string(),
            }),
        }
    }
    out
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    match values.len() {
        0 => (None, None),
        1 => (Some(values[0]), None),
        _ => (Some(stats::mean(values)), Some(stats::std_dev(values))),
    }
}

fn aggregate(rows: &[MetricsRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<GroupKey, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry(GroupKey {
                method: r.method,
                population_size: r.population_size,
                trees: r.trees,
            })
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|(key, rows)| {
            let sizes: Vec<f64> = rows.iter().map(|r| r.sample_size as f64).collect();
            let mmd: Vec<f64> = rows.iter().filter_map(|r| r.mmd).collect();
            let rmse: Vec<f64> = rows.iter().filter_map(|r| r.rmse).collect();
            let (mmd_mean, mmd_sd) = mean_sd(&mmd);
            let (rmse_mean, rmse_sd) = mean_sd(&rmse);
            Aggregate {
                method: key.method,
                population_size: key.population_size,
                trees: key.trees,
                replications: rows.len(),
                sample_size_mean: stats::mean(&sizes),
                mmd_mean,
                mmd_sd,
                rmse_mean,
                rmse_sd,
            }
        })
        .collect()
}

fn pointwise(curves: &[(u64, CurveRow)], x1: &[f64], null_signal: bool) -> Vec<PointwiseRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&CurveRow>> = BTreeMap::new();
    for (_, c) in curves {
        groups.entry(c.key).or_default().push(c);
    }
    let mut out = Vec::new();
    for (key, rows) in groups {
        for (g, &x) in x1.iter().enumerate() {
            let values: Vec<f64> = rows.iter().filter_map(|r| r.values[g]).collect();
            if values.is_empty() {
                continue;
            }
            let truth = curve_truth(x, null_signal);
            let errors: Vec<f64> = values.iter().map(|v| (v - truth).powi(2)).collect();
            out.push(PointwiseRow {
                method: key.method,
                population_size: key.population_size,
                trees: key.trees,
                x1: x,
                truth,
                mean_estimate: stats::mean(&values),
                mse: stats::mean(&errors),
                sd: if values.len() > 1 {
                    stats::std_dev(&values)
                } else {
                    0.0
                },
                replications: values.len(),
            });
        }
    }
    out
}

/// Runs every (seed, population size) job in parallel on the current rayon
/// pool. Results are ordered by seed list position, then population size, so
/// the report does not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, master_seed: u64) -> Result<MetricsReport> {
    cfg.validate()?;
    let seeds = cfg.seed_list(master_seed);
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| cfg.population_sizes.iter().map(move |&n| (s, n)))
        .collect();
    let outcomes: Vec<SeedOutcome> = jobs.par_iter().map(|&(s, n)| run_seed(cfg, s, n)).collect();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        rows.extend(o.rows);
        curves.extend(o.curves);
        failures.extend(o.failures);
    }
    let x1 = rmse_grid(cfg.rmse_grid);
    Ok(MetricsReport {
        aggregates: aggregate(&rows),
        pointwise: if cfg.rmse {
            pointwise(&curves, &x1, cfg.null_signal)
        } else {
            Vec::new()
        },
        rows,
        failures,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsReport {
    /// Rows matching `method`, `population_size` and `trees`, in run order.
    pub fn select(&self, method: Method, population_size: usize, trees: usize) -> Vec<&MetricsRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.method == method && r.population_size == population_size && r.trees == trees
            })
            .collect()
    }

    pub fn aggregate(
        &self,
        method: Method,
        population_size: usize,
        trees: usize,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.method == method && a.population_size == population_size && a.trees == trees
        })
    }

    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "seed",
            "method",
            "population_size",
            "trees",
            "sample_size",
            "mmd",
            "rmse",
            "unsupported",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.seed.to_string(),
                r.method.as_str().to_string(),
                r.population_size.to_string(),
                r.trees.to_string(),
                r.sample_size.to_string(),
                opt(r.mmd),
                opt(r.rmse),
                r.unsupported.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pointwise_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "population_size",
            "trees",
            "x1",
            "truth",
            "mean_estimate",
            "mse",
            "sd",
            "replications",
        ])?;
        for r in &self.pointwise {
            w.write_record([
                r.method.as_str().to_string(),
                r.population_size.to_string(),
                r.trees.to_string(),
                r.x1.to_string(),
                r.truth.to_string(),
                r.mean_estimate.to_string(),
                r.mse.to_string(),
                r.sd.to_string(),
                r.replications.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aggregates and failures as pretty JSON.
    pub fn aggregate_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            aggregates: &'a [Aggregate],
            failures: &'a [Failure],
        }
        serde_json::to_string_pretty(&Doc {
            aggregates: &self.aggregates,
            failures: &self.failures,
        })
        .map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            population_sizes: vec![1500],
            trees: vec![2, 5],
            replications: 2,
            mmd_grid: 4,
            reference_draws: 100,
            rmse_grid: 11,
            rmse_pairs: 2,
            forest: ForestConfig {
                max_depth: 4,
                ..ForestConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn report_shape_and_ranges() {
        let report = run_experiment(&small(), 11).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert_eq!(report.rows.len(), 2 * 2 * 2);
        assert_eq!(report.aggregates.len(), 4);
        for r in &report.rows {
            assert!(r.mmd.unwrap() >= 0.0 && r.rmse.unwrap() >= 0.0);
        }
        assert_eq!(report.pointwise.len(), 4 * 11);
        let a = report.aggregate(Method::Sdrf, 1500, 5).unwrap();
        let rows = report.select(Method::Sdrf, 1500, 5);
        let mean = rows.iter().map(|r| r.rmse.unwrap()).sum::<f64>() / rows.len() as f64;
        assert!((a.rmse_mean.unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn report_is_reproducible() {
        let cfg = small();
        let a = run_experiment(&cfg, 3).unwrap();
        let b = crate::forest::with_workers(3, || run_experiment(&cfg, 3))
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prefix_metrics_match_smaller_forest() {
        let cfg = small();
        let full = run_experiment(&cfg, 5).unwrap();
        let only = run_experiment(
            &ExperimentConfig {
                trees: vec![5],
                ..cfg.clone()
            },
            5,
        )
        .unwrap();
        for r in only.rows {
            let twin = full
                .select(r.method, r.population_size, 5)
                .into_iter()
                .find(|f| f.seed == r.seed)
                .unwrap();
            assert_eq!(&r, twin);
        }
    }

    #[test]
    fn self_term_matches_double_sum() {
        let k = KernelSpec::gaussian(1.3, 2).unwrap();
        let r = Array2::from_shape_fn((7, 2), |(i, j)| (i * 3 + j) as f64 * 0.21);
        let mut direct = 0.0;
        for a in r.rows() {
            for b in r.rows() {
                direct += k.eval(a.to_slice().unwrap(), b.to_slice().unwrap());
            }
        }
        assert!((reference_self_term(&r, &k) - direct / 49.0).abs() < 1e-14);
    }

    #[test]
    fn null_signal_methods_agree() {
        let cfg = ExperimentConfig {
            population_sizes: vec![2000],
            trees: vec![20],
            replications: 12,
            null_signal: true,
            mmd: false,
            rmse_grid: 50,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg, 21).unwrap();
        let rmse = |m| {
            report
                .select(m, 2000, 20)
                .iter()
                .map(|r| r.rmse.unwrap())
                .collect::<Vec<_>>()
        };
        let (s, d) = (rmse(Method::Sdrf), rmse(Method::Drf));
        assert!(stats::mean(&s) < 0.3 && stats::mean(&d) < 0.3);
        let p = stats::paired_t_less(&s, &d).unwrap().p_value;
        assert!(2.0 * p.min(1.0 - p) > 0.01, "p = {p}");
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small();
        cfg.second_stage_fraction = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.trees = vec![0];
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"tres": [1]}"#).is_err());
    }

    #[test]
    fn rmse_skips_unsupported_points() {
        let (v, skipped) = rmse(&[Some(0.0), None, Some(2.0 + 1.0)], &[0.0, 0.5, 1.0], false);
        assert_eq!(skipped, 1);
        assert!((v.unwrap() - (0.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pairs_alternate_sign() {
        let plan = evaluation_plan(&small(), 1);
        assert_eq!(plan.rmse_pairs[0][0], 1.0);
        assert_eq!(plan.rmse_pairs[1][0], -1.0);
    }
}
