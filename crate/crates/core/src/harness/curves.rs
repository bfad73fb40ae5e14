//! Nearest-neighbour distance and estimation error as functions of sample size.

use std::path::Path;

use rayon::prelude::*;

use super::bundle::Bundle;
use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{draw_samples, estimate_sp_all};
use crate::metrics::{nn_distance_curve, Metric};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub metric: Metric,
    pub size: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub classifier: String,
    pub metric: Metric,
    pub size: usize,
    /// Mean over queries of `|estimate - stored success probability|`.
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub distances: Vec<DistanceRow>,
    pub errors: Vec<ErrorRow>,
}

/// Both tables for every metric and size. The estimator uses `K` sets of
/// size `s` from the whole pool; the same sets serve every metric.
pub fn curves(
    bundle: &Bundle,
    config: &RunConfig,
    sizes: &[usize],
    trials: usize,
) -> Result<Curves> {
    if sizes.is_empty() {
        return Err(Error::InvalidInput("no sample sizes given".into()));
    }
    let pool = bundle.validation_pool(&bundle.pool)?;
    let queries = bundle.query_embeddings();
    let truth: Vec<Vec<f64>> = bundle
        .outputs
        .iter()
        .map(|t| {
            bundle
                .queries
                .iter()
                .map(|&q| t.row(q)[bundle.labels[q]])
                .collect()
        })
        .collect();

    let mut distances = Vec::new();
    for metric in Metric::ALL {
        for p in nn_distance_curve(
            &pool.embeddings,
            &queries,
            sizes,
            metric,
            trials,
            config.seed,
        )? {
            distances.push(DistanceRow {
                metric,
                size: p.size,
                mean_distance: p.mean_distance,
            });
        }
    }

    let mut errors = Vec::new();
    for &s in sizes {
        let samples = draw_samples(&pool, config.k, s, derive_seed(config.seed, "curves", 0))?;
        for metric in Metric::ALL {
            let estimates: Vec<Vec<f64>> = (0..queries.len())
                .into_par_iter()
                .map(|j| estimate_sp_all(queries.row(j), &samples, metric))
                .collect::<Result<_>>()?;
            for (i, profile) in bundle.profiles.iter().enumerate() {
                let total: f64 = estimates
                    .iter()
                    .zip(&truth[i])
                    .map(|(e, t)| (e[i] - t).abs())
                    .sum();
                errors.push(ErrorRow {
                    classifier: profile.name.clone(),
                    metric,
                    size: s,
                    mean_abs_error: total / queries.len() as f64,
                });
            }
        }
    }
    // roster order, then metric, then size
    let rank = |r: &ErrorRow| {
        let c = bundle.profiles.iter().position(|p| p.name == r.classifier);
        let m = Metric::ALL.iter().position(|&m| m == r.metric);
        (c, m, r.size)
    };
    errors.sort_by_key(rank);
    Ok(Curves { distances, errors })
}

/// Writes `nn_distance.csv` and `estimation_error.csv`.
pub fn write_curves(curves: &Curves, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("nn_distance.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["metric", "s", "mean_distance"])?;
    for r in &curves.distances {
        w.write_record([
            r.metric.to_string(),
            r.size.to_string(),
            r.mean_distance.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("estimation_error.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["classifier", "metric", "s", "mean_abs_error"])?;
    for r in &curves.errors {
        w.write_record([
            r.classifier.clone(),
            r.metric.to_string(),
            r.size.to_string(),
            r.mean_abs_error.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
