//! Nearest-neighbour success-probability estimation.
//!
//! For classifier `i` and query `x`, the success probability `SP_i(x)` is the
//! probability mass the classifier puts on the true label of `x`. It is
//! estimated from `K` labelled sample sets as the mean of `SP_i` at the
//! nearest neighbour of `x` in each set. The per-classifier standard
//! deviation of that estimate, `sigma_i`, is measured by redrawing whole
//! sample families and feeds the `lambda * sigma_i` score regularizer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{nearest_unchecked, subset_indices, Embeddings, Metric};

/// Tolerance on probability rows held in memory.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Per-point probability vectors over `C` classes, stored row-major.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbabilityTable {
    classes: usize,
    data: Vec<f64>,
}

impl ProbabilityTable {
    /// Validates that every row lies in `[0, 1]` and sums to 1 within `tolerance`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], classes: usize, tolerance: f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * classes);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            check_distribution(r, classes, tolerance)
                .map_err(|reason| Error::InvalidProbability { row: i, reason })?;
            data.extend_from_slice(r);
        }
        Ok(ProbabilityTable { classes, data })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.classes).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// Most likely class of row `i`; ties go to the lowest class index.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn select(&self, indices: &[usize]) -> ProbabilityTable {
        let mut data = Vec::with_capacity(indices.len() * self.classes);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        ProbabilityTable {
            classes: self.classes,
            data,
        }
    }
}

fn check_distribution(
    row: &[f64],
    classes: usize,
    tolerance: f64,
) -> std::result::Result<(), String> {
    if row.len() != classes {
        return Err(format!("expected {classes} entries, found {}", row.len()));
    }
    if let Some(v) = row
        .iter()
        .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
    {
        return Err(format!("entry {v} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tolerance {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// `SP = dist[truth]`: the chance a soft classifier emitting `dist` is right.
pub fn success_probability(dist: &[f64], truth: usize) -> Result<f64> {
    dist.get(truth).copied().ok_or(Error::ClassOutOfRange {
        index: truth,
        classes: dist.len(),
    })
}

/// Labelled validation data with stored outputs of every classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPool {
    pub ids: Vec<String>,
    pub embeddings: Embeddings,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// One table per classifier, rows aligned with `ids`.
    pub outputs: Vec<ProbabilityTable>,
}

impl ValidationPool {
    pub fn new(
        ids: Vec<String>,
        embeddings: Embeddings,
        labels: Vec<usize>,
        classes: usize,
        outputs: Vec<ProbabilityTable>,
    ) -> Result<Self> {
        let n = ids.len();
        if embeddings.len() != n || labels.len() != n {
            return Err(Error::DataIntegrity(format!(
                "pool has {n} ids, {} embeddings and {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::ClassOutOfRange { index: l, classes });
        }
        for (i, t) in outputs.iter().enumerate() {
            if t.len() != n || t.classes() != classes {
                return Err(Error::DataIntegrity(format!(
                    "classifier {i} has {} output rows over {} classes, expected {n} over {classes}",
                    t.len(),
                    t.classes()
                )));
            }
        }
        Ok(ValidationPool {
            ids,
            embeddings,
            labels,
            classes,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classifiers(&self) -> usize {
        self.outputs.len()
    }

    /// `SP_i` at pool point `p`, read from the stored distribution.
    pub fn success(&self, classifier: usize, p: usize) -> f64 {
        self.outputs[classifier].row(p)[self.labels[p]]
    }

    pub fn subset(&self, indices: &[usize]) -> ValidationPool {
        ValidationPool {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            embeddings: self.embeddings.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            outputs: self.outputs.iter().map(|t| t.select(indices)).collect(),
        }
    }
}

/// One labelled sample `S_k` drawn from a [`ValidationPool`].
///
/// Holds the sampled embeddings and, per classifier, the success probability
/// at each sampled point. The full distributions stay in the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    members: Vec<usize>,
    points: Embeddings,
    success: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn from_pool(pool: &ValidationPool, members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(&m) = members.iter().find(|&&m| m >= pool.len()) {
            return Err(Error::DataIntegrity(format!(
                "sample member {m} outside pool"
            )));
        }
        let points = pool.embeddings.select(&members);
        let success = (0..pool.classifiers())
            .map(|i| members.iter().map(|&p| pool.success(i, p)).collect())
            .collect();
        Ok(SampleSet {
            members,
            points,
            success,
        })
    }

    /// Declared size `s`.
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Pool indices of the sampled points, ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn points(&self) -> &Embeddings {
        &self.points
    }

    pub fn classifiers(&self) -> usize {
        self.success.len()
    }

    pub fn success(&self, classifier: usize) -> Option<&[f64]> {
        self.success.get(classifier).map(Vec::as_slice)
    }
}

/// Draws `k` independent uniform samples of size `s`.
///
/// Within a sample points are distinct; across samples they are drawn
/// independently. Sample `j` depends only on `(seed, j)`.
pub fn draw_samples(
    pool: &ValidationPool,
    k: usize,
    s: usize,
    seed: u64,
) -> Result<Vec<SampleSet>> {
    if k == 0 || s == 0 {
        return Err(Error::InvalidInput("K and s must be positive".into()));
    }
    if s > pool.len() {
        return Err(Error::SampleTooLarge {
            requested: s,
            available: pool.len(),
        });
    }
    (0..k)
        .into_par_iter()
        .map(|j| {
            SampleSet::from_pool(
                pool,
                subset_indices(pool.len(), s, seed, "sample-set", s, j),
            )
        })
        .collect()
}

fn check_samples(x: &[f64], samples: &[SampleSet], classifier: Option<usize>) -> Result<()> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    if x.len() != first.points.dim() {
        return Err(Error::DimensionMismatch {
            expected: first.points.dim(),
            found: x.len(),
        });
    }
    for set in samples {
        if let Some(i) = classifier {
            if i >= set.classifiers() {
                return Err(Error::MissingOutputs(i));
            }
        }
        if set.classifiers() != first.classifiers() || set.points.dim() != first.points.dim() {
            return Err(Error::DataIntegrity("inconsistent sample sets".into()));
        }
    }
    Ok(())
}

/// Nearest-neighbour estimate of `SP_i(x)` for a single classifier.
pub fn estimate_sp(
    x: &[f64],
    classifier: usize,
    samples: &[SampleSet],
    metric: Metric,
) -> Result<f64> {
    check_samples(x, samples, Some(classifier))?;
    let total: f64 = samples
        .iter()
        .map(|set| set.success[classifier][nearest_unchecked(x, &set.points, metric).0])
        .sum();
    Ok(total / samples.len() as f64)
}

/// Estimates for every classifier at once, sharing the neighbour searches.
pub fn estimate_sp_all(x: &[f64], samples: &[SampleSet], metric: Metric) -> Result<Vec<f64>> {
    check_samples(x, samples, None)?;
    Ok(estimate_all_unchecked(x, samples, metric))
}

fn estimate_all_unchecked(x: &[f64], samples: &[SampleSet], metric: Metric) -> Vec<f64> {
    let m = samples[0].classifiers();
    let mut acc = vec![0.0; m];
    for set in samples {
        let nn = nearest_unchecked(x, &set.points, metric).0;
        for (i, a) in acc.iter_mut().enumerate() {
            *a += set.success[i][nn];
        }
    }
    let k = samples.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// `sigma_i` for every classifier: the standard deviation of the estimate
/// across `resamples` independently redrawn sample families of `k` sets of
/// size `s`, averaged over the held-out `queries`.
pub fn estimate_sigmas(
    pool: &ValidationPool,
    queries: &Embeddings,
    k: usize,
    s: usize,
    metric: Metric,
    resamples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if resamples < 2 {
        return Err(Error::InvalidInput(format!(
            "sigma estimation needs at least 2 resamples, got {resamples}"
        )));
    }
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    if s > pool.len() {
        return Err(Error::SampleTooLarge {
            requested: s,
            available: pool.len(),
        });
    }
    let families = (0..resamples)
        .map(|r| {
            draw_samples(
                pool,
                k,
                s,
                crate::rng::derive_seed(seed, "sigma-family", r as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if queries.dim() != pool.embeddings.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.embeddings.dim(),
            found: queries.dim(),
        });
    }
    let m = pool.classifiers();
    let per_query: Vec<Vec<f64>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let x = queries.row(q);
            // estimates[r][i]
            let estimates: Vec<Vec<f64>> = families
                .iter()
                .map(|fam| estimate_all_unchecked(x, fam, metric))
                .collect();
            (0..m)
                .map(|i| {
                    let column: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
                    sample_std(&column)
                })
                .collect()
        })
        .collect();
    let nq = queries.len() as f64;
    Ok((0..m)
        .map(|i| per_query.iter().map(|row| row[i]).sum::<f64>() / nq)
        .collect())
}

/// Single-classifier form of [`estimate_sigmas`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_sigma(
    classifier: usize,
    pool: &ValidationPool,
    queries: &Embeddings,
    k: usize,
    s: usize,
    metric: Metric,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if classifier >= pool.classifiers() {
        return Err(Error::MissingOutputs(classifier));
    }
    Ok(estimate_sigmas(pool, queries, k, s, metric, resamples, seed)?[classifier])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub k: usize,
    pub s: usize,
    pub metric: Metric,
    pub temperature: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            k: 40,
            s: 1000,
            metric: Metric::Linf,
            temperature: 1e-3,
            lambda: 5.0,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.k == 0 || self.s == 0 {
            return Err(Error::InvalidInput("K and s must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidInput("temperature must be positive".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidInput("lambda must be non-negative".into()));
        }
        if self.s > pool_size {
            return Err(Error::SampleTooLarge {
                requested: self.s,
                available: pool_size,
            });
        }
        Ok(())
    }
}

/// Estimated success probabilities for `M` classifiers on `N` queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// `raw[i][j]` estimates `SP_i(x_j)`.
    pub raw: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub lambda: f64,
    /// `raw[i][j] - lambda * sigma[i]`.
    pub regularized: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(raw: Vec<Vec<f64>>, sigma: Vec<f64>, lambda: f64) -> Result<Self> {
        if raw.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                expected: raw.len(),
                found: sigma.len(),
            });
        }
        if let Some(n) = raw.first().map(Vec::len) {
            if raw.iter().any(|r| r.len() != n) {
                return Err(Error::DataIntegrity("ragged score matrix".into()));
            }
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidInput("lambda must be non-negative".into()));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("sigma must be non-negative".into()));
        }
        let regularized = raw
            .iter()
            .zip(&sigma)
            .map(|(row, &s)| row.iter().map(|v| v - lambda * s).collect())
            .collect();
        Ok(ScoreMatrix {
            raw,
            sigma,
            lambda,
            regularized,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        ScoreMatrix::new(self.raw.clone(), self.sigma.clone(), lambda)
    }

    pub fn classifiers(&self) -> usize {
        self.raw.len()
    }

    pub fn queries(&self) -> usize {
        self.raw.first().map_or(0, Vec::len)
    }
}

/// Estimates every `(classifier, query)` score and attaches `sigma` and `lambda`.
pub fn build_score_matrix(
    queries: &Embeddings,
    samples: &[SampleSet],
    sigma: Vec<f64>,
    config: &EstimatorConfig,
) -> Result<ScoreMatrix> {
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    check_samples(queries.row(0), samples, None)?;
    let m = samples[0].classifiers();
    if sigma.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: sigma.len(),
        });
    }
    let per_query: Vec<Vec<f64>> = (0..queries.len())
        .into_par_iter()
        .map(|j| estimate_all_unchecked(queries.row(j), samples, config.metric))
        .collect();
    let raw = (0..m)
        .map(|i| per_query.iter().map(|q| q[i]).collect())
        .collect();
    ScoreMatrix::new(raw, sigma, config.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-D pool: point p sits at p/10 with label 0; classifier 0 puts
    /// `succ[p]` on class 0.
    fn line_pool(succ: &[f64]) -> ValidationPool {
        let n = succ.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|p| vec![p as f64 / 10.0]).collect();
        let probs: Vec<Vec<f64>> = succ.iter().map(|&s| vec![s, 1.0 - s]).collect();
        ValidationPool::new(
            (0..n).map(|p| format!("p{p}")).collect(),
            Embeddings::from_rows(&rows).unwrap(),
            vec![0; n],
            2,
            vec![ProbabilityTable::from_rows(&probs, 2, 1e-9).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn success_probability_reads_truth_entry() {
        assert_eq!(success_probability(&[0.0, 1.0, 0.0], 1).unwrap(), 1.0);
        assert_eq!(success_probability(&[0.25; 4], 3).unwrap(), 0.25);
        assert_eq!(success_probability(&[0.7, 0.2, 0.1], 1).unwrap(), 0.2);
        assert!(matches!(
            success_probability(&[0.5, 0.5], 2),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn probability_rows_validated() {
        let err =
            ProbabilityTable::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.3]], 2, 1e-6).unwrap_err();
        assert!(matches!(err, Error::InvalidProbability { row: 1, .. }));
        assert!(ProbabilityTable::from_rows(&[vec![1.2, -0.2]], 2, 1e-6).is_err());
        let t = ProbabilityTable::from_rows(&[vec![0.4, 0.4, 0.2]], 3, 1e-9).unwrap();
        assert_eq!(t.argmax(0), 0);
    }

    #[test]
    fn draw_samples_contract() {
        let pool = line_pool(&[0.5; 20]);
        let full = draw_samples(&pool, 3, 20, 1).unwrap();
        for set in &full {
            assert_eq!(set.members(), (0..20).collect::<Vec<_>>().as_slice());
        }
        let a = draw_samples(&pool, 5, 7, 42).unwrap();
        let b = draw_samples(&pool, 5, 7, 42).unwrap();
        assert_eq!(a, b);
        for set in &a {
            let mut m = set.members().to_vec();
            m.dedup();
            assert_eq!(m.len(), 7);
        }
        assert!(matches!(
            draw_samples(&pool, 2, 21, 0),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn estimate_is_exact_for_in_sample_queries() {
        let succ: Vec<f64> = (0..10).map(|p| p as f64 / 10.0).collect();
        let pool = line_pool(&succ);
        let samples = draw_samples(&pool, 4, 10, 3).unwrap();
        for (p, &truth) in succ.iter().enumerate() {
            let x = pool.embeddings.row(p);
            assert_eq!(estimate_sp(x, 0, &samples, Metric::L1).unwrap(), truth);
        }
    }

    #[test]
    fn estimate_averages_neighbour_success() {
        let pool = line_pool(&[0.8, 0.6]);
        let s0 = SampleSet::from_pool(&pool, vec![0]).unwrap();
        let s1 = SampleSet::from_pool(&pool, vec![1]).unwrap();
        let est = estimate_sp(&[0.05], 0, &[s0, s1], Metric::L2).unwrap();
        assert!((est - 0.7).abs() < 1e-15);

        let pool = line_pool(&[1.0; 6]);
        let samples = draw_samples(&pool, 3, 2, 9).unwrap();
        assert_eq!(
            estimate_sp(&[0.33], 0, &samples, Metric::Linf).unwrap(),
            1.0
        );
        assert!(matches!(
            estimate_sp(&[0.33], 1, &samples, Metric::Linf),
            Err(Error::MissingOutputs(1))
        ));
    }

    #[test]
    fn sigma_of_deterministic_classifier_is_zero() {
        let pool = line_pool(&[1.0; 30]);
        let q = Embeddings::from_rows(&[vec![0.11], vec![2.5]]).unwrap();
        let s = estimate_sigma(0, &pool, &q, 4, 5, Metric::L1, 5, 1).unwrap();
        assert_eq!(s, 0.0);
        assert!(estimate_sigma(0, &pool, &q, 4, 5, Metric::L1, 1, 1).is_err());
        assert!(matches!(
            estimate_sigma(0, &pool, &q, 4, 31, Metric::L1, 3, 1),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn sigma_is_nonnegative_and_positive_for_noisy_neighbours() {
        let succ: Vec<f64> = (0..40)
            .map(|p| if p % 2 == 0 { 0.9 } else { 0.1 })
            .collect();
        let pool = line_pool(&succ);
        let q = Embeddings::from_rows(&[vec![1.05], vec![2.0]]).unwrap();
        let s = estimate_sigma(0, &pool, &q, 3, 4, Metric::L1, 10, 5).unwrap();
        assert!(s > 0.0);
    }

    #[test]
    fn score_matrix_regularization() {
        let raw = vec![vec![0.9, 0.8], vec![0.5, 0.7]];
        let m = ScoreMatrix::new(raw.clone(), vec![0.01, 0.02], 0.0).unwrap();
        assert_eq!(m.regularized, raw);
        let m5 = m.with_lambda(5.0).unwrap();
        for (row, (shifted, shift)) in raw.iter().zip(m5.regularized.iter().zip([0.05, 0.10])) {
            for (r, s) in row.iter().zip(shifted) {
                assert!((s - (r - shift)).abs() < 1e-15);
            }
        }
        assert!(ScoreMatrix::new(raw, vec![0.1], 0.0).is_err());
    }

    #[test]
    fn built_scores_stay_in_unit_interval() {
        let succ: Vec<f64> = (0..25).map(|p| (p as f64 * 0.37).fract()).collect();
        let pool = line_pool(&succ);
        let samples = draw_samples(&pool, 6, 5, 2).unwrap();
        let q = Embeddings::from_rows(&[vec![0.0], vec![1.23], vec![9.0]]).unwrap();
        let cfg = EstimatorConfig {
            metric: Metric::L1,
            lambda: 0.0,
            ..Default::default()
        };
        let m = build_score_matrix(&q, &samples, vec![0.0], &cfg).unwrap();
        assert_eq!((m.classifiers(), m.queries()), (1, 3));
        assert!(m.raw[0].iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
