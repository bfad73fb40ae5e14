use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_model-portfolio"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path) -> std::path::PathBuf {
    let out = cli(&[
        "simulate",
        "--out",
        s(dir),
        "--classes",
        "4",
        "--dim",
        "8",
        "--pool-per-class",
        "40",
        "--queries-per-class",
        "10",
        "--budgets",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    dir.join("config.json")
}

#[test]
fn every_subcommand_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = simulate(&dir.path().join("bundle"));

    let out = cli(&["audit", "--config", s(&config)]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["min_interclass_distance"].as_f64().unwrap() >= 0.3);
    assert_eq!(report["duplicate_conflicts"], 0);

    let est = dir.path().join("est");
    assert!(cli(&[
        "estimate",
        "--config",
        s(&config),
        "--out",
        s(&est),
        "--lambda",
        "5"
    ])
    .status
    .success());
    let scores = std::fs::read_to_string(est.join("scores.csv")).unwrap();
    assert!(scores.starts_with("id,classifier,raw,regularized\n"));
    assert_eq!(scores.lines().count(), 1 + 40 * 5);
    let sigma = std::fs::read_to_string(est.join("sigma.csv")).unwrap();
    assert_eq!(sigma.lines().count(), 1 + 5);

    let sol = dir.path().join("solve");
    let out = cli(&[
        "solve",
        "--config",
        s(&config),
        "--budget",
        "0.4",
        "--out",
        s(&sol),
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["cost"].as_f64().unwrap() <= 0.4 * 40.0 + 1e-9);
    assert_eq!(summary["certificate"], "optimal");
    let portfolio = std::fs::read_to_string(sol.join("portfolio.csv")).unwrap();
    assert_eq!(portfolio.lines().count(), 1 + 40);

    let sweep = dir.path().join("sweep");
    assert!(cli(&["sweep", "--config", s(&config), "--out", s(&sweep)])
        .status
        .success());
    let tradeoff = std::fs::read_to_string(sweep.join("tradeoff.csv")).unwrap();
    assert_eq!(tradeoff.lines().count(), 1 + 5 * 3);

    let curves = dir.path().join("curves");
    let out = cli(&[
        "curves",
        "--config",
        s(&config),
        "--out",
        s(&curves),
        "--sizes",
        "5,20,80",
        "--trials",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let nn = std::fs::read_to_string(curves.join("nn_distance.csv")).unwrap();
    assert_eq!(nn.lines().count(), 1 + 3 * 3);
    let err = std::fs::read_to_string(curves.join("estimation_error.csv")).unwrap();
    assert_eq!(err.lines().count(), 1 + 5 * 3 * 3);
}

#[test]
fn exit_codes_separate_infeasible_from_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let config = simulate(&dir.path().join("bundle"));
    let out = cli(&[
        "solve",
        "--config",
        s(&config),
        "--budget",
        "0.1",
        "--out",
        s(&dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));

    let out = cli(&[
        "sweep",
        "--config",
        s(&dir.path().join("missing.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(dir.path().join("bad.json"), "{\"metric\": \"l3\"}").unwrap();
    let out = cli(&[
        "sweep",
        "--config",
        s(&dir.path().join("bad.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
}
