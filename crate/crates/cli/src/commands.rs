use std::fs;

use rayon::prelude::*;
use serde::Serialize;

use sdrf::design::io::{read_queries, read_sample_file, write_population, write_sample};
use sdrf::design::{design_diagnostics, DesignDiagnostics};
use sdrf::forest::{fit_forest, Forest, ForestAudit, TreeParams, TreeSummary};
use sdrf::functionals::{
    cond_cdf, cond_quantile, in_sample_scores, mahalanobis_score, weighted_quantile,
    ConditionalSummary, ToleranceRegion,
};
use sdrf::sim::{self, ExperimentConfig, SurveyPlan};

use crate::config::{
    self, CliError, Context, FitConfig, Functionals, PredictConfig, SimulateConfig,
};
use crate::output::{ensure_dir, json, write_atomic, write_text};
use crate::CommonArgs;

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    population_size: usize,
    strata: u32,
    psus_per_stratum: u32,
    plan: SurveyPlan,
    diagnostics: DesignDiagnostics,
}

pub fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let seed = args.require_seed()?;
    let cfg: SimulateConfig = config::load(&args.config)?;
    let exp = ExperimentConfig {
        population_sizes: vec![cfg.population_size],
        covariates: cfg.covariates,
        strata: cfg.strata,
        psu_size: cfg.psu_size,
        psus_per_stratum: cfg.psus_per_stratum,
        expected_psus: cfg.expected_psus,
        second_stage_fraction: cfg.second_stage_fraction,
        null_signal: cfg.null_signal,
        ..ExperimentConfig::default()
    };
    if !(cfg.second_stage_fraction > 0.0 && cfg.second_stage_fraction <= 1.0) {
        return Err(CliError::Config(
            "second_stage_fraction must lie in (0, 1]".into(),
        ));
    }
    if !(cfg.psu_size >= 1.0) {
        return Err(CliError::Config("psu_size must be at least 1".into()));
    }
    if cfg.expected_psus.is_some_and(|n| !(n >= 1.0)) {
        return Err(CliError::Config("expected_psus must be at least 1".into()));
    }
    let pop_cfg = exp.population_config(cfg.population_size);
    let plan = exp.survey_plan(cfg.population_size);
    let pop = sim::generate_population(&pop_cfg, seed).context("generating population")?;
    let sample = sim::apply_survey(&pop, &plan, seed).context("drawing sample")?;
    let report = SimulateReport {
        seed,
        population_size: pop.len(),
        strata: pop_cfg.strata,
        psus_per_stratum: pop_cfg.psus_per_stratum,
        plan,
        diagnostics: design_diagnostics(&sample, pop.len()),
    };
    ensure_dir(&args.out)?;
    write_atomic(&args.out, "population.csv", |buf| {
        write_population(&pop, buf).context("writing population")
    })?;
    write_atomic(&args.out, "sample.csv", |buf| {
        write_sample(&sample, buf).context("writing sample")
    })?;
    write_text(&args.out, "diagnostics.json", &json(&report)?)?;
    log::info!(
        "population of {} units, sample of {} units from {} PSUs",
        pop.len(),
        sample.len(),
        sample.n_psus()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitLog<'a> {
    seed: u64,
    sample_size: usize,
    psus: usize,
    params: &'a TreeParams,
    bandwidth: f64,
    audit: ForestAudit,
    trees: Vec<TreeSummary>,
}

pub fn fit(args: &CommonArgs) -> Result<(), CliError> {
    let seed = args.require_seed()?;
    let mut cfg: FitConfig = config::load(&args.config)?;
    let path = config::resolve(&args.config, &cfg.sample);
    let sample = read_sample_file(&path).context(format!("reading {}", path.display()))?;
    cfg.forest.seed = seed;
    let forest = fit_forest(&sample, &cfg.forest).context("fitting forest")?;
    let summaries = forest.tree_summaries();
    for (b, t) in summaries.iter().enumerate() {
        log::debug!(
            "tree {b}: depth {}, {} leaves, {} split PSUs, {} estimation PSUs",
            t.depth,
            t.leaves,
            t.split_psus,
            t.est_psus
        );
    }
    let audit = forest.audit();
    log::info!(
        "fitted {} trees on {} units; mean depth {:.2}",
        forest.n_trees(),
        sample.len(),
        summaries.iter().map(|t| t.depth as f64).sum::<f64>() / summaries.len().max(1) as f64
    );
    let log = FitLog {
        seed,
        sample_size: sample.len(),
        psus: sample.n_psus(),
        params: forest.params(),
        bandwidth: forest.kernel().bandwidth(),
        audit,
        trees: summaries,
    };
    ensure_dir(&args.out)?;
    write_text(
        &args.out,
        "model.json",
        &forest.to_json().context("serializing model")?,
    )?;
    write_text(&args.out, "fit_log.json", &json(&log)?)?;
    Ok(())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Column header of the prediction table.
fn prediction_header(
    f: &Functionals,
    d: usize,
    regions: &[ToleranceRegion],
    has_y: bool,
) -> Vec<String> {
    let mut h = vec!["query".to_string(), "status".to_string()];
    if f.mean {
        h.extend((1..=d).map(|k| format!("mean_y{k}")));
    }
    if f.covariance {
        for a in 1..=d {
            for b in a..=d {
                h.push(format!("cov_y{a}_y{b}"));
            }
        }
    }
    for tau in &f.quantiles {
        h.extend((1..=d).map(|k| format!("q{tau}_y{k}")));
    }
    h.extend((1..=f.cdf_at.len()).map(|j| format!("cdf_{j}")));
    if has_y {
        h.extend(regions.iter().map(|r| format!("inside_alpha{}", r.alpha)));
    }
    h
}

enum QueryOutcome {
    Ok(Vec<String>, ConditionalSummary),
    Flagged(&'static str),
}

fn evaluate_query(
    forest: &Forest,
    x: &[f64],
    y: Option<&[f64]>,
    f: &Functionals,
    regions: &[ToleranceRegion],
) -> Result<QueryOutcome, CliError> {
    let dist = match forest.predict_distribution(x) {
        Ok(d) => d,
        Err(sdrf::Error::NoSupport) => return Ok(QueryOutcome::Flagged("no_support")),
        Err(e) => return Err(e.into()),
    };
    let d = dist.dim();
    let summary = ConditionalSummary::of(&dist);
    let mut cells = Vec::new();
    if f.mean {
        cells.extend(summary.mean.iter().copied().map(fmt));
    }
    if f.covariance {
        for a in 0..d {
            for b in a..d {
                cells.push(fmt(summary.covariance[[a, b]]));
            }
        }
    }
    for &tau in &f.quantiles {
        for k in 0..d {
            cells.push(fmt(cond_quantile(&dist, k, tau)?));
        }
    }
    for point in &f.cdf_at {
        cells.push(fmt(cond_cdf(&dist, point)?));
    }
    if let Some(y) = y {
        for r in regions {
            match mahalanobis_score(&summary, y, r.ridge) {
                Ok(s) => cells.push((s <= r.threshold).to_string()),
                Err(sdrf::Error::SingularCovariance) => {
                    return Ok(QueryOutcome::Flagged("singular_covariance"))
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(QueryOutcome::Ok(cells, summary))
}

#[derive(Serialize)]
struct ThresholdEntry {
    alpha: f64,
    threshold: f64,
}

#[derive(Serialize)]
struct QuerySummary {
    query: usize,
    x: Vec<f64>,
    status: &'static str,
    mean: Option<Vec<f64>>,
    covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct ToleranceSummary {
    ridge: Option<f64>,
    thresholds: Vec<ThresholdEntry>,
    queries: Vec<QuerySummary>,
}

pub fn predict(args: &CommonArgs) -> Result<(), CliError> {
    let cfg: PredictConfig = config::load(&args.config)?;
    let f = &cfg.functionals;
    if f.quantiles.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(CliError::Config(
            "quantile levels must lie in (0, 1)".into(),
        ));
    }
    let model_path = config::resolve(&args.config, &cfg.model);
    let text =
        fs::read_to_string(&model_path).context(format!("reading {}", model_path.display()))?;
    let forest = Forest::from_json(&text).context(format!("loading {}", model_path.display()))?;
    let d = forest.sample().outcome_dim();
    let p = forest.sample().n_covariates();
    if let Some(bad) = f.cdf_at.iter().find(|c| c.len() != d) {
        return Err(CliError::Config(format!(
            "cdf point {bad:?} needs {d} coordinates"
        )));
    }
    let query_path = config::resolve(&args.config, &cfg.queries);
    let file = fs::File::open(&query_path).context(format!("opening {}", query_path.display()))?;
    let queries = read_queries(file, p, d).context(format!("reading {}", query_path.display()))?;

    let mut regions = Vec::new();
    if let Some(tol) = &f.tolerance {
        if tol.alphas.is_empty() || tol.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(CliError::Config(
                "tolerance alphas must be nonempty and lie in (0, 1)".into(),
            ));
        }
        if let Some(g) = &tol.outcome_grid {
            g.validate(d)?;
        }
        let scores = in_sample_scores(&forest, tol.ridge).context("scoring training sample")?;
        let weights = forest.sample().weights();
        for &alpha in &tol.alphas {
            regions.push(ToleranceRegion {
                alpha,
                threshold: weighted_quantile(&scores, &weights, 1.0 - alpha)?,
                ridge: tol.ridge,
            });
        }
    }

    let rows: Vec<usize> = (0..queries.len()).collect();
    let outcomes = rows
        .par_iter()
        .map(|&i| {
            let x = queries.x.row(i).to_vec();
            let y = queries.y.as_ref().map(|y| y.row(i).to_vec());
            evaluate_query(&forest, &x, y.as_deref(), f, &regions)
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let header = prediction_header(f, d, &regions, queries.y.is_some());
    ensure_dir(&args.out)?;
    write_atomic(&args.out, "predictions.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let res: csv::Result<()> = (|| {
            w.write_record(&header)?;
            for (i, o) in outcomes.iter().enumerate() {
                let mut rec = vec![(i + 1).to_string()];
                match o {
                    QueryOutcome::Ok(cells, _) => {
                        rec.push("ok".into());
                        rec.extend(cells.iter().cloned());
                    }
                    QueryOutcome::Flagged(status) => {
                        rec.push(status.to_string());
                        rec.resize(header.len(), String::new());
                    }
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(sdrf::Error::from)
            .context("writing predictions")
    })?;
    let flagged = outcomes
        .iter()
        .filter(|o| matches!(o, QueryOutcome::Flagged(_)))
        .count();
    if flagged > 0 {
        log::warn!("{flagged} of {} queries flagged", outcomes.len());
    }

    if let Some(tol) = &f.tolerance {
        let summary = ToleranceSummary {
            ridge: tol.ridge,
            thresholds: regions
                .iter()
                .map(|r| ThresholdEntry {
                    alpha: r.alpha,
                    threshold: r.threshold,
                })
                .collect(),
            queries: outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    let x = queries.x.row(i).to_vec();
                    match o {
                        QueryOutcome::Ok(_, s) => QuerySummary {
                            query: i + 1,
                            x,
                            status: "ok",
                            mean: Some(s.mean.clone()),
                            covariance: Some(
                                s.covariance
                                    .rows()
                                    .into_iter()
                                    .map(|r| r.to_vec())
                                    .collect(),
                            ),
                        },
                        QueryOutcome::Flagged(status) => QuerySummary {
                            query: i + 1,
                            x,
                            status,
                            mean: None,
                            covariance: None,
                        },
                    }
                })
                .collect(),
        };
        write_text(&args.out, "tolerance_summary.json", &json(&summary)?)?;
        if let Some(grid) = &tol.outcome_grid {
            let points = grid.points();
            write_atomic(&args.out, "tolerance_grid.csv", |buf| {
                let mut w = csv::Writer::from_writer(buf);
                let res: csv::Result<()> = (|| {
                    let mut h = vec!["query".to_string(), "alpha".to_string()];
                    h.extend((1..=d).map(|k| format!("y{k}")));
                    h.push("inside".into());
                    w.write_record(&h)?;
                    for (i, o) in outcomes.iter().enumerate() {
                        let QueryOutcome::Ok(_, s) = o else { continue };
                        for r in &regions {
                            for y in &points {
                                let inside = match mahalanobis_score(s, y, r.ridge) {
                                    Ok(score) => score <= r.threshold,
                                    Err(_) => false,
                                };
                                let mut rec = vec![(i + 1).to_string(), fmt(r.alpha)];
                                rec.extend(y.iter().copied().map(fmt));
                                rec.push(inside.to_string());
                                w.write_record(&rec)?;
                            }
                        }
                    }
                    w.flush()?;
                    Ok(())
                })();
                res.map_err(sdrf::Error::from)
                    .context("writing tolerance grid")
            })?;
        }
    }
    Ok(())
}

pub fn bench(args: &CommonArgs) -> Result<(), CliError> {
    let seed = args.require_seed()?;
    let cfg: ExperimentConfig = config::load(&args.config)?;
    cfg.validate().context("invalid experiment config")?;
    let report = sim::run_experiment(&cfg, seed).context("running experiment")?;
    for fail in &report.failures {
        log::warn!(
            "seed {} at N = {} failed: {}",
            fail.seed,
            fail.population_size,
            fail.message
        );
    }
    ensure_dir(&args.out)?;
    write_atomic(&args.out, "metrics.csv", |buf| {
        report.write_metrics_csv(buf).context("writing metrics")
    })?;
    write_atomic(&args.out, "pointwise.csv", |buf| {
        report
            .write_pointwise_csv(buf)
            .context("writing pointwise grid")
    })?;
    write_text(
        &args.out,
        "aggregate.json",
        &(report.aggregate_json()? + "\n"),
    )?;
    Ok(())
}
