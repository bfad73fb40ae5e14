//! File formats, baselines, budget sweeps and experiment tables.
//!
//! A run is described by a `config.json` that points at `embeddings.csv`,
//! `labels.csv` and one `outputs_<name>.csv` (or `logits_<name>.csv`) per
//! classifier. Points are split into a labelled pool, from which the
//! estimator draws, and the queries that get assigned.

mod bundle;
mod config;
mod curves;
mod sweep;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use bundle::{export_synthetic, ingest, write_config, Bundle, INGEST_PROBABILITY_TOLERANCE};
pub use config::{Baselines, ClassifierEntry, LambdaSetting, RunConfig};
pub use curves::{curves, write_curves, Curves, DistanceRow, ErrorRow};
pub use sweep::{
    prepare, run_portfolio, run_random, run_single_best, sweep, write_report, LambdaTrial,
    Metadata, Method, Outcome, Prepared, SweepReport, SweepRow, TraceRow,
};

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::simulator::{
    generate_task, ladder, ladder_noise, SyntheticClassifier, SyntheticTask, TaskSpec,
};

/// Parameters of a synthetic bundle written by [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateOptions {
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub radius: f64,
    pub manifold_dim: usize,
    pub pool_per_class: usize,
    pub queries_per_class: usize,
    pub costs: Vec<f64>,
    /// Prototype noise per classifier; defaults to [`ladder_noise`].
    pub noise: Option<Vec<f64>>,
    pub logit_scale: f64,
    pub temperature: f64,
    pub budgets: usize,
    pub seed: u64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            classes: 10,
            dim: 16,
            separation: 0.3,
            radius: 0.1,
            manifold_dim: 2,
            pool_per_class: 200,
            queries_per_class: 50,
            costs: vec![0.15, 0.22, 0.29, 0.52, 1.0],
            noise: None,
            logit_scale: 0.003,
            temperature: 1e-3,
            budgets: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ClassifierSummary {
    name: String,
    cost: f64,
    noise: f64,
    logit_scale: f64,
    temperature: f64,
    lipschitz_l1: f64,
    lipschitz_l2: f64,
    lipschitz_linf: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SimulationSummary<'a> {
    options: &'a SimulateOptions,
    oracle_lipschitz: f64,
    classifiers: Vec<ClassifierSummary>,
}

/// `n` budgets evenly spaced from the cheapest to the dearest cost, rounded
/// to four decimals.
pub fn budget_grid(costs: &[f64], n: usize) -> Vec<f64> {
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(0.0, f64::max);
    if n <= 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| {
            let b = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (b * 1e4).round() / 1e4
        })
        .collect()
}

/// Generates a task and classifier ladder and writes a complete bundle,
/// including `config.json` and `simulation.json`, into `dir`.
pub fn simulate(
    dir: &Path,
    options: &SimulateOptions,
) -> Result<(SyntheticTask, Vec<SyntheticClassifier>, RunConfig)> {
    let spec = TaskSpec {
        classes: options.classes,
        dim: options.dim,
        declared_r: options.separation,
        radius: options.radius,
        points_per_class: options.pool_per_class,
        manifold_dim: options.manifold_dim,
        seed: options.seed,
    };
    let task = generate_task(&spec)?;
    let queries = task.sample_points(options.queries_per_class, "queries", "q");
    let noise = options
        .noise
        .clone()
        .unwrap_or_else(|| ladder_noise(options.costs.len()));
    let classifiers = ladder(
        &task,
        &options.costs,
        &noise,
        options.logit_scale,
        options.temperature,
    )?;
    export_synthetic(dir, &task.points, &queries, &classifiers)?;

    let lambda = LambdaSetting::default();
    let sample_pool = task.points.len() / 2;
    let config = RunConfig {
        metric: Metric::Linf,
        k: 40,
        s: (sample_pool / 4).clamp(1, 1000),
        tau: options.temperature,
        lambda,
        seed: options.seed,
        budgets: budget_grid(&options.costs, options.budgets),
        feature_extraction_cost: 0.0,
        classifiers: classifiers
            .iter()
            .map(|c| ClassifierEntry {
                name: c.name.clone(),
                cost: c.cost,
                outputs_path: PathBuf::from(format!("outputs_{}.csv", c.name)),
            })
            .collect(),
        baselines: Baselines::default(),
        embeddings_path: PathBuf::from("embeddings.csv"),
        labels_path: PathBuf::from("labels.csv"),
        splits_path: Some(PathBuf::from("splits.csv")),
        query_fraction: 0.5,
        sigma_resamples: 20,
        sigma_queries: 200,
        digest: String::new(),
    };
    config.validate()?;
    write_config(&dir.join("config.json"), &config)?;

    let summary = SimulationSummary {
        options,
        oracle_lipschitz: task.oracle_lipschitz(),
        classifiers: classifiers
            .iter()
            .zip(&noise)
            .map(|(c, &n)| ClassifierSummary {
                name: c.name.clone(),
                cost: c.cost,
                noise: n,
                logit_scale: c.scale,
                temperature: c.temperature,
                lipschitz_l1: c.lipschitz(Metric::L1),
                lipschitz_l2: c.lipschitz(Metric::L2),
                lipschitz_linf: c.lipschitz(Metric::Linf),
            })
            .collect(),
    };
    let path = dir.join("simulation.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((task, classifiers, config))
}
