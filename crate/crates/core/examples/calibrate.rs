//! Prints realized sample sizes and RMSE for a benchmark config.
//!
//! Usage: `cargo run --release --example calibrate -- CONFIG.json SEED`

use std::time::Instant;

use sdrf::sim::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let cfg: ExperimentConfig = match args.get(1) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let seed = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);
    for &n in &cfg.population_sizes {
        let plan = cfg.survey_plan(n);
        println!(
            "N={n} psus_per_stratum={} expected_psus={:.3}",
            cfg.population_config(n).psus_per_stratum,
            plan.expected_psus
        );
    }
    let start = Instant::now();
    let report = run_experiment(&cfg, seed)?;
    for a in &report.aggregates {
        println!(
            "{:>4} N={:<6} B={:<4} reps={:<3} n_s={:<8.1} mmd={:?}±{:?} rmse={:?}±{:?}",
            a.method.as_str(),
            a.population_size,
            a.trees,
            a.replications,
            a.sample_size_mean,
            a.mmd_mean,
            a.mmd_sd,
            a.rmse_mean,
            a.rmse_sd
        );
    }
    for f in &report.failures {
        println!("failure: {f:?}");
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
