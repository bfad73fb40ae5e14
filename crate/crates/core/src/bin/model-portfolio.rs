use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use model_portfolio::harness::{self, RunConfig, SimulateOptions};
use model_portfolio::metrics::{separation_audit, Metric};
use model_portfolio::portfolio::LabeledPoint;
use model_portfolio::{Error, Result};

#[derive(Parser)]
#[command(
    name = "model-portfolio",
    version,
    about = "Assign classifiers to queries under a cost budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic bundle (embeddings, labels, outputs, config).
    Simulate(SimulateArgs),
    /// Report inter-class separation of the bundle's points.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Metric to audit; defaults to the config's metric.
        #[arg(long)]
        metric: Option<Metric>,
    },
    /// Write estimated scores and sigma for every query and classifier.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Regularization weight; defaults to the first configured value.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Solve one normalized budget and write the assignment.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        budget: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every method over the configured budgets.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest-neighbour distance and estimation error against sample size.
    Curves {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "50,200,1000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Minimum LINF distance between points of different classes.
    #[arg(long, default_value_t = 0.3)]
    separation: f64,
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    #[arg(long, default_value_t = 2)]
    manifold_dim: usize,
    #[arg(long, default_value_t = 200)]
    pool_per_class: usize,
    #[arg(long, default_value_t = 50)]
    queries_per_class: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.15,0.22,0.29,0.52,1.0")]
    costs: Vec<f64>,
    /// Prototype noise per classifier, most noisy first.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.003)]
    logit_scale: f64,
    #[arg(long, default_value_t = 1e-3)]
    temperature: f64,
    /// Number of budgets in the generated config.
    #[arg(long, default_value_t = 20)]
    budgets: usize,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn load(config: &Path) -> Result<(RunConfig, harness::Bundle)> {
    let config = RunConfig::load(config)?;
    let bundle = harness::ingest(&config)?;
    Ok((config, bundle))
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct SolveSummary {
    budget: f64,
    raw_budget: f64,
    effective_budget: f64,
    lambda: Option<f64>,
    accuracy: f64,
    cost: f64,
    objective: f64,
    certificate: String,
    usage: Vec<(String, f64)>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let options = SimulateOptions {
                classes: a.classes,
                dim: a.dim,
                separation: a.separation,
                radius: a.radius,
                manifold_dim: a.manifold_dim,
                pool_per_class: a.pool_per_class,
                queries_per_class: a.queries_per_class,
                costs: a.costs,
                noise: a.noise,
                logit_scale: a.logit_scale,
                temperature: a.temperature,
                budgets: a.budgets,
                seed: a.seed,
            };
            harness::simulate(&a.out, &options)?;
            eprintln!("wrote bundle to {}", a.out.display());
        }
        Command::Audit { config, metric } => {
            let (config, bundle) = load(&config)?;
            let points: Vec<LabeledPoint> = (0..bundle.ids.len())
                .map(|i| {
                    LabeledPoint::new(
                        bundle.ids[i].clone(),
                        bundle.embeddings.row(i).to_vec(),
                        bundle.labels[i],
                    )
                })
                .collect();
            print_json(&separation_audit(&points, metric.unwrap_or(config.metric))?)?;
        }
        Command::Estimate {
            config,
            out,
            lambda,
        } => {
            let (config, bundle) = load(&config)?;
            let prepared = harness::prepare(&bundle, &config)?;
            let lambda = lambda.unwrap_or(config.lambda.values()[0]);
            let scores = prepared.scores.with_lambda(lambda)?;
            create_dir(&out)?;
            let ids = bundle.query_ids();
            let names: Vec<&str> = bundle.profiles.iter().map(|p| p.name.as_str()).collect();
            let rows = ids.iter().enumerate().flat_map(|(j, id)| {
                let scores = &scores;
                names.iter().enumerate().map(move |(i, name)| {
                    vec![
                        id.clone(),
                        name.to_string(),
                        scores.raw[i][j].to_string(),
                        scores.regularized[i][j].to_string(),
                    ]
                })
            });
            write_csv(
                &out.join("scores.csv"),
                &["id", "classifier", "raw", "regularized"],
                rows,
            )?;
            let rows = names
                .iter()
                .zip(&scores.sigma)
                .map(|(n, s)| vec![n.to_string(), s.to_string()]);
            write_csv(&out.join("sigma.csv"), &["classifier", "sigma"], rows)?;
        }
        Command::Solve {
            config,
            budget,
            out,
        } => {
            let (config, bundle) = load(&config)?;
            let prepared = harness::prepare(&bundle, &config)?;
            let (outcome, _) = harness::run_portfolio(&bundle, &prepared, &config, budget)?;
            create_dir(&out)?;
            let rows = outcome
                .portfolio
                .assignment
                .iter()
                .map(|(id, &c)| vec![id.clone(), bundle.profiles[c].name.clone()]);
            write_csv(&out.join("portfolio.csv"), &["id", "classifier"], rows)?;
            let usage = outcome.portfolio.usage(bundle.profiles.len());
            print_json(&SolveSummary {
                budget,
                raw_budget: outcome.budget.raw_budget,
                effective_budget: outcome.budget.effective_budget,
                lambda: outcome.lambda,
                accuracy: outcome.accuracy,
                cost: outcome.portfolio.realized_cost,
                objective: outcome.portfolio.objective,
                certificate: outcome
                    .certificate
                    .map_or_else(String::new, |c| c.to_string()),
                usage: bundle
                    .profiles
                    .iter()
                    .map(|p| p.name.clone())
                    .zip(usage)
                    .collect(),
            })?;
        }
        Command::Sweep { config, out } => {
            let (config, bundle) = load(&config)?;
            let report = harness::sweep(&bundle, &config)?;
            harness::write_report(&report, &out)?;
            let failed = report.rows.iter().filter(|r| r.result.is_err()).count();
            eprintln!(
                "{} rows written to {} ({failed} failed)",
                report.rows.len(),
                out.display()
            );
        }
        Command::Curves {
            config,
            out,
            sizes,
            trials,
        } => {
            let (config, bundle) = load(&config)?;
            let curves = harness::curves(&bundle, &config, &sizes, trials)?;
            harness::write_curves(&curves, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_infeasible() { 2 } else { 3 })
        }
    }
}
