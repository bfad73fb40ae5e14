//! Portfolio and baseline runs over a budget grid, and their CSV reports.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::bundle::Bundle;
use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{build_score_matrix, draw_samples, estimate_sigmas, ScoreMatrix};
use crate::portfolio::{accuracy, within_budget, BudgetSpec, Portfolio};
use crate::rng::{derive_seed, substream};
use crate::solver::{solve, AssignmentProblem, Certificate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Portfolio,
    SingleBest,
    Random,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Portfolio => "portfolio",
            Method::SingleBest => "single_best",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimator state shared by every budget of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Bundle indices the sample sets are drawn from.
    pub sample_pool: Vec<usize>,
    /// Bundle indices used to pick lambda; empty for a fixed lambda.
    pub tuning: Vec<usize>,
    /// Scores on the queries, regularized with the first lambda.
    pub scores: ScoreMatrix,
    pub tuning_scores: Option<ScoreMatrix>,
}

/// Splits the pool, draws the sample sets, estimates sigma and scores the
/// queries (and the tuning split when lambda is a grid).
pub fn prepare(bundle: &Bundle, config: &RunConfig) -> Result<Prepared> {
    let (sample_pool, tuning) = if config.lambda.is_grid() {
        let mut order = bundle.pool.clone();
        order.shuffle(&mut substream(config.seed, "tuning-split", 0));
        let half = order.len() / 2;
        let mut tuning = order[..half].to_vec();
        let mut sample = order[half..].to_vec();
        tuning.sort_unstable();
        sample.sort_unstable();
        (sample, tuning)
    } else {
        (bundle.pool.clone(), Vec::new())
    };
    if config.lambda.is_grid() && tuning.is_empty() {
        return Err(Error::InvalidInput(
            "pool too small to hold out a tuning split".into(),
        ));
    }
    let pool = bundle.validation_pool(&sample_pool)?;
    let first_lambda = config.lambda.values()[0];
    let est = config.estimator(first_lambda);
    est.validate(pool.len())?;

    let samples = draw_samples(
        &pool,
        config.k,
        config.s,
        derive_seed(config.seed, "estimator", 0),
    )?;
    let queries = bundle.query_embeddings();
    let mut held_out: Vec<usize> = (0..queries.len()).collect();
    held_out.shuffle(&mut substream(config.seed, "sigma-queries", 0));
    held_out.truncate(config.sigma_queries);
    held_out.sort_unstable();
    let sigma = estimate_sigmas(
        &pool,
        &queries.select(&held_out),
        config.k,
        config.s,
        config.metric,
        config.sigma_resamples,
        derive_seed(config.seed, "sigma", 0),
    )?;

    let scores = build_score_matrix(&queries, &samples, sigma.clone(), &est)?;
    let tuning_scores = if tuning.is_empty() {
        None
    } else {
        let emb = bundle.features.select(&tuning);
        Some(build_score_matrix(&emb, &samples, sigma, &est)?)
    };
    Ok(Prepared {
        sample_pool,
        tuning,
        scores,
        tuning_scores,
    })
}

/// One realized assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub portfolio: Portfolio,
    pub accuracy: f64,
    pub certificate: Option<Certificate>,
    pub lambda: Option<f64>,
    pub budget: BudgetSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTrial {
    pub lambda: f64,
    pub tuning_accuracy: std::result::Result<f64, String>,
    pub selected: bool,
}

fn budget_for(config: &RunConfig, normalized: f64, queries: usize) -> Result<BudgetSpec> {
    BudgetSpec::new(normalized * queries as f64, config.feature_extraction_cost)
}

/// Argmax accuracy of `choices` on the points `indices` of the bundle.
fn realized_accuracy(
    bundle: &Bundle,
    indices: &[usize],
    portfolio: &Portfolio,
    choices: &[usize],
) -> Result<f64> {
    let mut predictions = HashMap::with_capacity(indices.len());
    let mut truth = HashMap::with_capacity(indices.len());
    for (&i, &c) in indices.iter().zip(choices) {
        predictions.insert(bundle.ids[i].clone(), bundle.outputs[c].argmax(i));
        truth.insert(bundle.ids[i].clone(), bundle.labels[i]);
    }
    accuracy(portfolio, &predictions, &truth)
}

fn realize(
    bundle: &Bundle,
    indices: &[usize],
    choices: &[usize],
    objective: f64,
) -> Result<(Portfolio, f64)> {
    let ids: Vec<String> = indices.iter().map(|&i| bundle.ids[i].clone()).collect();
    let portfolio = Portfolio::from_choices(&ids, choices, &bundle.profiles, objective)?;
    let acc = realized_accuracy(bundle, indices, &portfolio, choices)?;
    Ok((portfolio, acc))
}

fn regularized(raw: &ScoreMatrix, lambda: f64) -> Vec<Vec<f64>> {
    raw.raw
        .iter()
        .zip(&raw.sigma)
        .map(|(row, s)| row.iter().map(|v| v - lambda * s).collect())
        .collect()
}

/// Estimated-accuracy portfolio at a normalized budget. With a lambda grid,
/// lambda is chosen by realized accuracy on the tuning split at the same
/// per-query budget; ties go to the earlier grid entry.
pub fn run_portfolio(
    bundle: &Bundle,
    prepared: &Prepared,
    config: &RunConfig,
    normalized_budget: f64,
) -> Result<(Outcome, Vec<LambdaTrial>)> {
    let n = bundle.queries.len();
    let budget = budget_for(config, normalized_budget, n)?;
    let costs = bundle.costs();

    let mut trials = Vec::new();
    let lambda = match &prepared.tuning_scores {
        None => config.lambda.values()[0],
        Some(tuning) => {
            let nt = prepared.tuning.len();
            let share = nt as f64 / n as f64;
            let tuning_budget =
                normalized_budget * nt as f64 - config.feature_extraction_cost * share;
            let mut best: Option<(f64, f64)> = None;
            for &lambda in config.lambda.values() {
                let problem = AssignmentProblem::new(
                    regularized(tuning, lambda),
                    costs.clone(),
                    tuning_budget,
                );
                let acc = solve(&problem).and_then(|s| {
                    realize(bundle, &prepared.tuning, &s.choices, s.objective).map(|r| r.1)
                });
                if let Ok(a) = acc {
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((lambda, a));
                    }
                }
                trials.push(LambdaTrial {
                    lambda,
                    tuning_accuracy: acc.map_err(|e| e.to_string()),
                    selected: false,
                });
            }
            let Some((lambda, _)) = best else {
                // surface the query-level infeasibility if that is the cause
                let problem = AssignmentProblem::new(
                    prepared.scores.raw.clone(),
                    costs,
                    budget.effective_budget,
                );
                solve(&problem)?;
                return Err(Error::InvalidInput(
                    "no lambda in the grid produced a tuning portfolio".into(),
                ));
            };
            if let Some(t) = trials.iter_mut().find(|t| t.lambda == lambda) {
                t.selected = true;
            }
            lambda
        }
    };

    let problem = AssignmentProblem::new(
        regularized(&prepared.scores, lambda),
        costs,
        budget.effective_budget,
    );
    let solution = solve(&problem)?;
    let (portfolio, acc) = realize(
        bundle,
        &bundle.queries,
        &solution.choices,
        solution.objective,
    )?;
    Ok((
        Outcome {
            portfolio,
            accuracy: acc,
            certificate: Some(solution.certificate),
            lambda: Some(lambda),
            budget,
        },
        trials,
    ))
}

/// The most expensive classifier whose uniform use fits the effective
/// budget; equal costs resolve to the lower index.
pub fn run_single_best(
    bundle: &Bundle,
    config: &RunConfig,
    normalized_budget: f64,
) -> Result<Outcome> {
    let n = bundle.queries.len();
    let budget = budget_for(config, normalized_budget, n)?;
    let costs = bundle.costs();
    let mut pick: Option<usize> = None;
    for (i, &c) in costs.iter().enumerate() {
        if within_budget(c * n as f64, budget.effective_budget) && pick.is_none_or(|p| c > costs[p])
        {
            pick = Some(i);
        }
    }
    let Some(i) = pick else {
        let cheapest = costs.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible {
            min_budget: cheapest * n as f64,
            budget: budget.effective_budget,
        });
    };
    let choices = vec![i; n];
    let (portfolio, acc) = realize(bundle, &bundle.queries, &choices, f64::NAN)?;
    Ok(Outcome {
        portfolio,
        accuracy: acc,
        certificate: None,
        lambda: None,
        budget,
    })
}

/// Scores drawn `U[0,1]` per (classifier, query), then solved exactly.
/// `stream` separates the draws of different budgets.
pub fn run_random(
    bundle: &Bundle,
    config: &RunConfig,
    normalized_budget: f64,
    stream: u64,
) -> Result<Outcome> {
    let n = bundle.queries.len();
    let budget = budget_for(config, normalized_budget, n)?;
    let mut rng = substream(config.seed, "random-baseline", stream);
    let scores: Vec<Vec<f64>> = (0..bundle.profiles.len())
        .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
        .collect();
    let problem = AssignmentProblem::new(scores, bundle.costs(), budget.effective_budget);
    let solution = solve(&problem)?;
    let (portfolio, acc) = realize(
        bundle,
        &bundle.queries,
        &solution.choices,
        solution.objective,
    )?;
    Ok(Outcome {
        portfolio,
        accuracy: acc,
        certificate: Some(solution.certificate),
        lambda: None,
        budget,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub budget: f64,
    pub method: Method,
    pub result: std::result::Result<Outcome, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub budget: f64,
    pub trial: LambdaTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub metric: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub s: usize,
    pub estimation_temperature: f64,
    pub test_predictions: &'static str,
    pub feature_extraction_cost: f64,
    pub feature_extraction_charged: &'static str,
    pub budget_unit: &'static str,
    pub classifiers: Vec<String>,
    pub queries: usize,
    pub sample_pool: usize,
    pub tuning_split: usize,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub trace: Vec<TraceRow>,
    pub metadata: Metadata,
}

/// Every method at every budget. Budgets run concurrently; a failing row
/// records its error and the sweep continues.
pub fn sweep(bundle: &Bundle, config: &RunConfig) -> Result<SweepReport> {
    let prepared = prepare(bundle, config)?;
    let per_budget: Vec<(Vec<SweepRow>, Vec<TraceRow>)> = config
        .budgets
        .par_iter()
        .enumerate()
        .map(|(t, &b)| {
            let mut rows = Vec::new();
            let mut trace = Vec::new();
            let result = run_portfolio(bundle, &prepared, config, b).map(|(outcome, trials)| {
                trace.extend(
                    trials
                        .into_iter()
                        .map(|trial| TraceRow { budget: b, trial }),
                );
                outcome
            });
            rows.push(SweepRow {
                budget: b,
                method: Method::Portfolio,
                result: result.map_err(|e| e.to_string()),
            });
            if config.baselines.single_best {
                rows.push(SweepRow {
                    budget: b,
                    method: Method::SingleBest,
                    result: run_single_best(bundle, config, b).map_err(|e| e.to_string()),
                });
            }
            if config.baselines.random {
                rows.push(SweepRow {
                    budget: b,
                    method: Method::Random,
                    result: run_random(bundle, config, b, t as u64).map_err(|e| e.to_string()),
                });
            }
            (rows, trace)
        })
        .collect();

    let mut rows = Vec::new();
    let mut trace = Vec::new();
    for (r, t) in per_budget {
        rows.extend(r);
        trace.extend(t);
    }
    let config_hash = if config.digest.is_empty() {
        config.hash()
    } else {
        config.digest.clone()
    };
    Ok(SweepReport {
        rows,
        trace,
        metadata: Metadata {
            config_hash,
            seed: config.seed,
            metric: config.metric.to_string(),
            k: config.k,
            s: config.s,
            estimation_temperature: config.tau,
            test_predictions: "argmax of stored probabilities",
            feature_extraction_cost: config.feature_extraction_cost,
            feature_extraction_charged: "once per query set",
            budget_unit: "normalized cost per query; raw budget = budget * queries",
            classifiers: bundle.profiles.iter().map(|p| p.name.clone()).collect(),
            queries: bundle.queries.len(),
            sample_pool: prepared.sample_pool.len(),
            tuning_split: prepared.tuning.len(),
            sigma: prepared.scores.sigma.clone(),
        },
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes `tradeoff.csv`, `usage.csv`, `lambda_trace.csv` and `metadata.json`.
pub fn write_report(report: &SweepReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("tradeoff.csv"))?;
    w.write_record([
        "budget",
        "raw_budget",
        "effective_budget",
        "method",
        "lambda",
        "accuracy",
        "cost",
        "objective",
        "certificate",
        "status",
    ])?;
    for row in &report.rows {
        let record = match &row.result {
            Ok(o) => [
                row.budget.to_string(),
                o.budget.raw_budget.to_string(),
                o.budget.effective_budget.to_string(),
                row.method.to_string(),
                opt(o.lambda),
                o.accuracy.to_string(),
                o.portfolio.realized_cost.to_string(),
                opt(Some(o.portfolio.objective).filter(|v| v.is_finite())),
                o.certificate.map_or_else(String::new, |c| c.to_string()),
                "ok".to_string(),
            ],
            Err(e) => [
                row.budget.to_string(),
                (row.budget * report.metadata.queries as f64).to_string(),
                (row.budget * report.metadata.queries as f64
                    - report.metadata.feature_extraction_cost)
                    .to_string(),
                row.method.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("error: {e}"),
            ],
        };
        w.write_record(&record)?;
    }
    w.flush()
        .map_err(|e| Error::io(dir.join("tradeoff.csv"), e))?;

    let mut w = csv_writer(&dir.join("usage.csv"))?;
    w.write_record(["budget", "method", "classifier", "fraction"])?;
    for row in &report.rows {
        if let Ok(o) = &row.result {
            let usage = o.portfolio.usage(report.metadata.classifiers.len());
            for (name, f) in report.metadata.classifiers.iter().zip(usage) {
                w.write_record([
                    row.budget.to_string(),
                    row.method.to_string(),
                    name.clone(),
                    f.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(dir.join("usage.csv"), e))?;

    let mut w = csv_writer(&dir.join("lambda_trace.csv"))?;
    w.write_record(["budget", "lambda", "tuning_accuracy", "selected", "status"])?;
    for t in &report.trace {
        let (acc, status) = match &t.trial.tuning_accuracy {
            Ok(a) => (a.to_string(), "ok".to_string()),
            Err(e) => (String::new(), format!("error: {e}")),
        };
        w.write_record([
            t.budget.to_string(),
            t.trial.lambda.to_string(),
            acc,
            t.trial.selected.to_string(),
            status,
        ])?;
    }
    w.flush()
        .map_err(|e| Error::io(dir.join("lambda_trace.csv"), e))?;

    let path = dir.join("metadata.json");
    let mut text = serde_json::to_string_pretty(&report.metadata)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
