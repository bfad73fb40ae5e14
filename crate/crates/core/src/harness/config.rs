//! `config.json`: run parameters, classifier roster and file locations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::metrics::Metric;

/// A single regularization weight or a grid tuned per budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl LambdaSetting {
    pub fn values(&self) -> &[f64] {
        match self {
            LambdaSetting::Fixed(v) => std::slice::from_ref(v),
            LambdaSetting::Grid(g) => g,
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, LambdaSetting::Grid(_))
    }
}

impl Default for LambdaSetting {
    fn default() -> Self {
        LambdaSetting::Grid(vec![0.0, 1.0, 5.0, 20.0, 100.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierEntry {
    pub name: String,
    pub cost: f64,
    /// `outputs_<name>.csv` with probabilities, or `logits_<name>.csv` with
    /// raw logits converted at `tau`.
    pub outputs_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baselines {
    #[serde(default = "yes")]
    pub single_best: bool,
    #[serde(default = "yes")]
    pub random: bool,
}

impl Default for Baselines {
    fn default() -> Self {
        Baselines {
            single_best: true,
            random: true,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_embeddings() -> PathBuf {
    PathBuf::from("embeddings.csv")
}

fn default_labels() -> PathBuf {
    PathBuf::from("labels.csv")
}

fn default_query_fraction() -> f64 {
    0.5
}

fn default_sigma_resamples() -> usize {
    20
}

fn default_sigma_queries() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metric: Metric,
    #[serde(rename = "K")]
    pub k: usize,
    pub s: usize,
    pub tau: f64,
    #[serde(default)]
    pub lambda: LambdaSetting,
    pub seed: u64,
    /// Per-query normalized budgets; the raw budget is `budget * queries`.
    pub budgets: Vec<f64>,
    /// Charged once per query set.
    #[serde(default)]
    pub feature_extraction_cost: f64,
    pub classifiers: Vec<ClassifierEntry>,
    #[serde(default)]
    pub baselines: Baselines,
    #[serde(default = "default_embeddings")]
    pub embeddings_path: PathBuf,
    #[serde(default = "default_labels")]
    pub labels_path: PathBuf,
    /// Optional `id,split` file with split `pool` or `query`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits_path: Option<PathBuf>,
    /// Fraction of points held out as queries when no splits file is given.
    #[serde(default = "default_query_fraction")]
    pub query_fraction: f64,
    #[serde(default = "default_sigma_resamples")]
    pub sigma_resamples: usize,
    /// Held-out queries used to average the estimator spread.
    #[serde(default = "default_sigma_queries")]
    pub sigma_queries: usize,
    /// Hash of the config as written, before path resolution.
    #[serde(skip)]
    pub digest: String,
}

impl RunConfig {
    /// Reads and validates a config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        config.digest = config.hash();
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.embeddings_path);
        join(&mut self.labels_path);
        if let Some(p) = self.splits_path.as_mut() {
            join(p);
        }
        for c in &mut self.classifiers {
            join(&mut c.outputs_path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.k == 0 || self.s == 0 {
            return bad("K and s must be positive".into());
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        let lambdas = self.lambda.values();
        if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("lambda values must be non-negative and at least one is required".into());
        }
        if self.budgets.is_empty() {
            return bad("at least one budget is required".into());
        }
        if self.budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return bad("budgets must be positive".into());
        }
        if self.budgets.windows(2).any(|w| w[0] > w[1]) {
            return bad("budgets must be sorted ascending".into());
        }
        if !(self.feature_extraction_cost.is_finite() && self.feature_extraction_cost >= 0.0) {
            return bad("feature_extraction_cost must be non-negative".into());
        }
        if self.classifiers.is_empty() {
            return bad("the classifier roster is empty".into());
        }
        for (i, c) in self.classifiers.iter().enumerate() {
            if c.name.is_empty() {
                return bad(format!("classifier {i} has an empty name"));
            }
            if !(c.cost.is_finite() && c.cost > 0.0) {
                return bad(format!("classifier '{}' needs a positive cost", c.name));
            }
            if self.classifiers[..i].iter().any(|o| o.name == c.name) {
                return bad(format!("duplicate classifier name '{}'", c.name));
            }
        }
        if !(self.query_fraction > 0.0 && self.query_fraction < 1.0) {
            return bad("query_fraction must lie strictly between 0 and 1".into());
        }
        if self.sigma_resamples < 2 || self.sigma_queries == 0 {
            return bad("sigma_resamples must be at least 2 and sigma_queries positive".into());
        }
        Ok(())
    }

    pub fn estimator(&self, lambda: f64) -> EstimatorConfig {
        EstimatorConfig {
            k: self.k,
            s: self.s,
            metric: self.metric,
            temperature: self.tau,
            lambda,
            seed: self.seed,
        }
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn costs(&self) -> Vec<f64> {
        self.classifiers.iter().map(|c| c.cost).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "metric": "linf", "K": 40, "s": 100, "tau": 0.001, "lambda": [0, 5], "seed": 3,
        "budgets": [0.2, 0.5], "feature_extraction_cost": 0.0,
        "classifiers": [{"name": "a", "cost": 0.15, "outputs_path": "outputs_a.csv"}],
        "baselines": {"single_best": true, "random": false}
    }"#;

    #[test]
    fn parses_and_applies_defaults() {
        let c: RunConfig = serde_json::from_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.k, 40);
        assert_eq!(c.metric, Metric::Linf);
        assert_eq!(c.lambda, LambdaSetting::Grid(vec![0.0, 5.0]));
        assert!(!c.baselines.random);
        assert_eq!(c.embeddings_path, PathBuf::from("embeddings.csv"));
        assert_eq!(c.sigma_resamples, 20);

        let scalar = MINIMAL.replace("[0, 5]", "2.5");
        let c: RunConfig = serde_json::from_str(&scalar).unwrap();
        assert_eq!(c.lambda.values(), &[2.5]);
        assert!(!c.lambda.is_grid());
    }

    #[test]
    fn rejects_bad_values() {
        let cases = [
            MINIMAL.replace("[0.2, 0.5]", "[0.5, 0.2]"),
            MINIMAL.replace("\"tau\": 0.001", "\"tau\": 0"),
            MINIMAL.replace("\"cost\": 0.15", "\"cost\": -1"),
            MINIMAL.replace("[0, 5]", "[-1]"),
        ];
        for text in cases {
            let c: RunConfig = serde_json::from_str(&text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
        assert!(serde_json::from_str::<RunConfig>(&MINIMAL.replace("\"K\"", "\"k\"")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut c: RunConfig = serde_json::from_str(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/data/run"));
        assert_eq!(
            c.classifiers[0].outputs_path,
            PathBuf::from("/data/run/outputs_a.csv")
        );
        assert_eq!(c.labels_path, PathBuf::from("/data/run/labels.csv"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a: RunConfig = serde_json::from_str(MINIMAL).unwrap();
        let b: RunConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c: RunConfig =
            serde_json::from_str(&MINIMAL.replace("\"seed\": 3", "\"seed\": 4")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
