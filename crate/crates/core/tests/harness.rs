use std::fs;
use std::path::Path;

use model_portfolio::harness::{
    self, ingest, run_random, run_single_best, sweep, write_config, LambdaSetting, Method,
    RunConfig, SimulateOptions,
};
use model_portfolio::portfolio::within_budget;
use model_portfolio::simulator::softmax_predict;
use model_portfolio::Error;

fn small() -> SimulateOptions {
    SimulateOptions {
        classes: 4,
        dim: 8,
        pool_per_class: 40,
        queries_per_class: 10,
        budgets: 8,
        ..SimulateOptions::default()
    }
}

fn simulated(
    dir: &Path,
    options: &SimulateOptions,
    edit: impl FnOnce(&mut RunConfig),
) -> RunConfig {
    let (_, _, mut config) = harness::simulate(dir, options).unwrap();
    edit(&mut config);
    let path = dir.join("config.json");
    write_config(&path, &config).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn ingest_reproduces_simulated_values() {
    let dir = tempfile::tempdir().unwrap();
    let options = small();
    let (task, classifiers, _) = harness::simulate(dir.path(), &options).unwrap();
    let config = RunConfig::load(&dir.path().join("config.json")).unwrap();
    let bundle = ingest(&config).unwrap();

    assert_eq!(bundle.pool.len(), task.points.len());
    assert_eq!(
        bundle.queries.len(),
        options.classes * options.queries_per_class
    );
    for (k, &i) in bundle.pool.iter().enumerate() {
        let p = &task.points[k];
        assert_eq!(bundle.ids[i], p.id);
        assert_eq!(bundle.labels[i], p.label);
        assert_eq!(bundle.embeddings.row(i), &p.embedding[..]);
        for (c, table) in classifiers.iter().zip(&bundle.outputs) {
            assert_eq!(table.row(i), &softmax_predict(c, &p.embedding).unwrap()[..]);
        }
    }
}

fn write_tiny(dir: &Path, second_row: &str) -> std::path::PathBuf {
    fs::write(
        dir.join("embeddings.csv"),
        "id,e0,e1\na,0,0\nb,1,0\nc,0,1\nd,1,1\n",
    )
    .unwrap();
    fs::write(dir.join("labels.csv"), "id,label\na,0\nb,1\nc,0\nd,1\n").unwrap();
    fs::write(
        dir.join("outputs_m.csv"),
        format!("id,p0,p1\na,0.9,0.1\n{second_row}\nc,0.6,0.4\nd,0.2,0.8\n"),
    )
    .unwrap();
    let config = r#"{
        "metric": "l2", "K": 2, "s": 1, "tau": 1.0, "lambda": 0.0, "seed": 3,
        "budgets": [1.0],
        "classifiers": [{"name": "m", "cost": 1.0, "outputs_path": "outputs_m.csv"}]
    }"#;
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn probability_rows_must_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::load(&write_tiny(dir.path(), "b,0.5,0.3")).unwrap();
    let err = ingest(&config).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }), "{err}");
    let text = err.to_string();
    assert!(text.contains("row 2"), "{text}");
    assert!(text.contains("0.8"), "{text}");

    let config = RunConfig::load(&write_tiny(dir.path(), "b,0.5,0.5")).unwrap();
    let bundle = ingest(&config).unwrap();
    assert_eq!(bundle.ids.len(), 4);
    assert_eq!(bundle.pool.len() + bundle.queries.len(), 4);
}

#[test]
fn duplicate_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tiny(dir.path(), "b,0.5,0.5");
    fs::write(
        dir.path().join("embeddings.csv"),
        "id,e0,e1\na,0,0\nb,1,0\na,0,1\nd,1,1\n",
    )
    .unwrap();
    let err = ingest(&RunConfig::load(&path).unwrap()).unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
}

#[test]
fn missing_outputs_file_names_the_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tiny(dir.path(), "b,0.5,0.5");
    fs::remove_file(dir.path().join("outputs_m.csv")).unwrap();
    match ingest(&RunConfig::load(&path).unwrap()).unwrap_err() {
        Error::MissingClassifierFile { name, .. } => assert_eq!(name, "m"),
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn single_best_picks_the_dearest_affordable_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let config = simulated(dir.path(), &small(), |_| {});
    let bundle = ingest(&config).unwrap();
    let n = bundle.queries.len();

    let pick = |b: f64| {
        let o = run_single_best(&bundle, &config, b).unwrap();
        let used: Vec<usize> = o.portfolio.assignment.values().copied().collect();
        assert!(used.iter().all(|&c| c == used[0]));
        assert_eq!(used.len(), n);
        bundle.profiles[used[0]].cost
    };
    assert_eq!(pick(1.0), 1.0);
    assert_eq!(pick(0.20), 0.15);
    assert_eq!(pick(0.29), 0.29);
    let err = run_single_best(&bundle, &config, 0.10).unwrap_err();
    assert!(err.is_infeasible(), "{err}");
}

#[test]
fn random_baseline_is_deterministic_and_uniform_for_equal_costs() {
    let dir = tempfile::tempdir().unwrap();
    let options = SimulateOptions {
        costs: vec![0.5, 0.5, 0.5],
        ..small()
    };
    let config = simulated(dir.path(), &options, |_| {});
    let bundle = ingest(&config).unwrap();
    let n = bundle.queries.len() as f64;

    let a = run_random(&bundle, &config, 0.5, 7).unwrap();
    let b = run_random(&bundle, &config, 0.5, 7).unwrap();
    assert_eq!(a.portfolio, b.portfolio);

    let mut usage = [0.0; 3];
    let streams = 40;
    for stream in 0..streams {
        let o = run_random(&bundle, &config, 0.5, stream).unwrap();
        assert!(within_budget(o.portfolio.realized_cost, 0.5 * n));
        for (u, f) in usage.iter_mut().zip(o.portfolio.usage(3)) {
            *u += f / streams as f64;
        }
    }
    for u in usage {
        assert!((u - 1.0 / 3.0).abs() < 0.05, "{usage:?}");
    }
}

#[test]
fn sweep_respects_budgets_and_reports_consistent_usage() {
    let dir = tempfile::tempdir().unwrap();
    let config = simulated(dir.path(), &small(), |c| {
        c.lambda = LambdaSetting::Fixed(0.0);
        c.feature_extraction_cost = 2.0;
    });
    let bundle = ingest(&config).unwrap();
    let report = sweep(&bundle, &config).unwrap();
    assert_eq!(report.rows.len(), 3 * config.budgets.len());

    let mut last = f64::NEG_INFINITY;
    for row in &report.rows {
        let Ok(o) = &row.result else { continue };
        let usage: f64 = o.portfolio.usage(bundle.profiles.len()).iter().sum();
        assert!((usage - 1.0).abs() < 1e-12);
        assert!(within_budget(
            o.portfolio.realized_cost + config.feature_extraction_cost,
            o.budget.raw_budget
        ));
        assert_eq!(
            o.budget.raw_budget,
            row.budget * bundle.queries.len() as f64
        );
        if row.method == Method::Portfolio {
            assert!(o.portfolio.objective >= last - 1e-9);
            last = o.portfolio.objective;
        }
    }
    // the cheapest budget cannot pay for the feature cost on top
    assert!(report.rows[0].result.is_err());
    assert!(
        report.rows.iter().filter(|r| r.result.is_ok()).count() >= 3 * (config.budgets.len() - 1)
    );

    let out = dir.path().join("report");
    harness::write_report(&report, &out).unwrap();
    for f in [
        "tradeoff.csv",
        "usage.csv",
        "lambda_trace.csv",
        "metadata.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let tradeoff = fs::read_to_string(out.join("tradeoff.csv")).unwrap();
    assert_eq!(tradeoff.lines().count(), 1 + report.rows.len());
    assert!(tradeoff.contains("infeasible"));
}

#[test]
fn lambda_grid_selects_exactly_one_value_per_budget() {
    let dir = tempfile::tempdir().unwrap();
    let config = simulated(dir.path(), &small(), |_| {});
    assert!(config.lambda.is_grid());
    let bundle = ingest(&config).unwrap();
    let report = sweep(&bundle, &config).unwrap();
    for &b in &config.budgets {
        let trials: Vec<_> = report.trace.iter().filter(|t| t.budget == b).collect();
        assert_eq!(trials.len(), config.lambda.values().len());
        assert_eq!(trials.iter().filter(|t| t.trial.selected).count(), 1);
        let best = trials
            .iter()
            .filter_map(|t| t.trial.tuning_accuracy.as_ref().ok())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let chosen = trials.iter().find(|t| t.trial.selected).unwrap();
        assert_eq!(chosen.trial.tuning_accuracy, Ok(best));
    }
}

#[test]
fn logits_files_are_converted_at_the_configured_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_tiny(dir.path(), "b,0.5,0.5");
    fs::write(
        dir.path().join("logits_m.csv"),
        "id,z0,z1\na,0,0\nb,1,0\nc,0,2\nd,3,3\n",
    )
    .unwrap();
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("outputs_m.csv", "logits_m.csv");
    fs::write(&path, text.replace("\"tau\": 1.0", "\"tau\": 0.5")).unwrap();
    let bundle = ingest(&RunConfig::load(&path).unwrap()).unwrap();
    let t = &bundle.outputs[0];
    assert_eq!(t.row(0), &[0.5, 0.5]);
    // softmax((1, 0) / 0.5)
    let e2 = 2f64.exp();
    assert!((t.row(1)[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
    assert!((t.row(2)[1] - 4f64.exp() / (4f64.exp() + 1.0)).abs() < 1e-15);
    assert_eq!(t.row(3), &[0.5, 0.5]);
}
