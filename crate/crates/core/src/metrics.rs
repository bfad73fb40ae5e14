//! Distance metrics, exact nearest-neighbour search and separation audits.
//!
//! Nearest-neighbour search is a linear scan. Ties are broken towards the
//! smallest candidate index, which makes every downstream estimate
//! reproducible.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::LabeledPoint;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Linf,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2, Metric::Linf];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Linf => "linf",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2" => Ok(Metric::L2),
            "linf" | "l_inf" | "linfinity" => Ok(Metric::Linf),
            other => Err(Error::InvalidInput(format!("unknown metric {other:?}"))),
        }
    }
}

/// Distance between two vectors of equal length.
pub fn distance(x: &[f64], y: &[f64], metric: Metric) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(distance_unchecked(x, y, metric))
}

#[inline]
pub(crate) fn distance_unchecked(x: &[f64], y: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
        Metric::L2 => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        Metric::Linf => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    }
}

/// Row-major matrix of points sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Embeddings {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut e = Embeddings::new(dim);
        for r in rows {
            e.push(r.as_ref())?;
        }
        Ok(e)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if self.data.is_empty() && self.dim == 0 {
            self.dim = row.len();
        }
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty dim would panic
        self.data.chunks_exact(self.dim.max(1)).take(self.len())
    }

    /// Copies the listed rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Embeddings {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Embeddings {
            dim: self.dim,
            data,
        }
    }
}

/// Exact nearest neighbour of `x` among `points`; ties go to the lowest index.
pub fn nearest_neighbor(x: &[f64], points: &Embeddings, metric: Metric) -> Result<(usize, f64)> {
    if points.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.len() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            found: x.len(),
        });
    }
    Ok(nearest_unchecked(x, points, metric))
}

pub(crate) fn nearest_unchecked(x: &[f64], points: &Embeddings, metric: Metric) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, row) in points.rows().enumerate() {
        let d = distance_unchecked(x, row, metric);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Per-dimension min-max scaling fitted on a reference pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxNormalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxNormalizer {
    pub fn fit(pool: &Embeddings) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut min = vec![f64::INFINITY; pool.dim()];
        let mut max = vec![f64::NEG_INFINITY; pool.dim()];
        for row in pool.rows() {
            for (k, &v) in row.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        Ok(MinMaxNormalizer { min, max })
    }

    /// Maps into `[0, 1]`, clamping values outside the fitted range.
    /// Constant dimensions map to 0.
    pub fn apply_row(&self, row: &mut [f64]) {
        for (k, v) in row.iter_mut().enumerate() {
            let span = self.max[k] - self.min[k];
            *v = if span > 0.0 {
                ((*v - self.min[k]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }

    pub fn apply(&self, e: &Embeddings) -> Result<Embeddings> {
        if e.dim() != self.min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.min.len(),
                found: e.dim(),
            });
        }
        let mut out = e.clone();
        for chunk in out.data.chunks_exact_mut(e.dim().max(1)) {
            self.apply_row(chunk);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub metric: Metric,
    /// The empirical r: smallest distance between points of different classes.
    pub min_interclass_distance: f64,
    /// `pair_minima[a][b]` for `a != b`; `None` on the diagonal and for
    /// classes without points.
    pub pair_minima: Vec<Vec<Option<f64>>>,
    /// Cross-class pairs at distance zero.
    pub duplicate_conflicts: usize,
}

/// Exact pairwise audit of inter-class distances.
pub fn separation_audit(points: &[LabeledPoint], metric: Metric) -> Result<SeparationReport> {
    let classes = points.iter().map(|p| p.label + 1).max().unwrap_or(0);
    let mut present = vec![false; classes];
    for p in points {
        present[p.label] = true;
    }
    let distinct = present.iter().filter(|&&b| b).count();
    if distinct < 2 {
        return Err(Error::SingleClass(distinct));
    }
    let dim = points[0].embedding.len();
    if let Some(p) = points.iter().find(|p| p.embedding.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.embedding.len(),
        });
    }

    let init = || (vec![f64::INFINITY; classes * classes], 0usize);
    let (minima, conflicts) = (0..points.len())
        .into_par_iter()
        .fold(init, |(mut minima, mut conflicts), i| {
            let a = &points[i];
            for b in &points[i + 1..] {
                if a.label == b.label {
                    continue;
                }
                let d = distance_unchecked(&a.embedding, &b.embedding, metric);
                if d == 0.0 {
                    conflicts += 1;
                }
                let (lo, hi) = (a.label.min(b.label), a.label.max(b.label));
                let cell = &mut minima[lo * classes + hi];
                if d < *cell {
                    *cell = d;
                }
            }
            (minima, conflicts)
        })
        .reduce(init, |(mut m1, c1), (m2, c2)| {
            for (a, b) in m1.iter_mut().zip(m2) {
                *a = a.min(b);
            }
            (m1, c1 + c2)
        });

    let mut pair_minima = vec![vec![None; classes]; classes];
    let mut overall = f64::INFINITY;
    for a in 0..classes {
        for b in a + 1..classes {
            let d = minima[a * classes + b];
            if d.is_finite() {
                pair_minima[a][b] = Some(d);
                pair_minima[b][a] = Some(d);
                overall = overall.min(d);
            }
        }
    }
    Ok(SeparationReport {
        metric,
        min_interclass_distance: overall,
        pair_minima,
        duplicate_conflicts: conflicts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub mean_distance: f64,
}

/// Mean nearest-neighbour distance from `queries` to uniform `s`-subsets of
/// `pool`, for every requested `s`.
///
/// Subsets depend only on `(seed, s, trial)`, never on the metric, so curves
/// for different metrics are computed over identical samples.
pub fn nn_distance_curve(
    pool: &Embeddings,
    queries: &Embeddings,
    sizes: &[usize],
    metric: Metric,
    trials: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    if queries.dim() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            found: queries.dim(),
        });
    }
    sizes
        .iter()
        .map(|&s| {
            if s == 0 {
                return Err(Error::EmptySample);
            }
            if s > pool.len() {
                return Err(Error::SampleTooLarge {
                    requested: s,
                    available: pool.len(),
                });
            }
            let total: f64 = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let subset = subset_indices(pool.len(), s, seed, "nn-curve", s, t);
                    let sample = pool.select(&subset);
                    queries
                        .rows()
                        .map(|q| nearest_unchecked(q, &sample, metric).1)
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .sum();
            Ok(CurvePoint {
                size: s,
                mean_distance: total / (trials * queries.len()) as f64,
            })
        })
        .collect()
}

/// Sorted uniform subset of `0..n` of size `s`, keyed by `(seed, name, s, trial)`.
pub(crate) fn subset_indices(
    n: usize,
    s: usize,
    seed: u64,
    name: &str,
    size_key: usize,
    trial: usize,
) -> Vec<usize> {
    let mut rng = substream(seed, name, ((size_key as u64) << 32) | trial as u64);
    let mut idx = index::sample(&mut rng, n, s).into_vec();
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_nn(x: &[f64], pts: &[Vec<f64>], m: Metric) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d = distance(x, p, m).unwrap();
            if d < best.1 || (d == best.1 && i < best.0) {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn distance_definitions() {
        let x = [1.0, 3.0];
        let y = [4.0, 1.0];
        assert_eq!(distance(&x, &y, Metric::L1).unwrap(), 5.0);
        assert!((distance(&x, &y, Metric::L2).unwrap() - 13f64.sqrt()).abs() < 1e-15);
        assert_eq!(distance(&x, &y, Metric::Linf).unwrap(), 3.0);
        for m in Metric::ALL {
            assert_eq!(distance(&x, &x, m).unwrap(), 0.0);
        }
        assert!(matches!(
            distance(&[1.0], &[1.0, 2.0], Metric::L1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn metric_parses() {
        assert_eq!("LINF".parse::<Metric>().unwrap(), Metric::Linf);
        assert_eq!("l2".parse::<Metric>().unwrap(), Metric::L2);
        assert!("cosine".parse::<Metric>().is_err());
    }

    #[test]
    fn nearest_neighbor_examples() {
        let s = Embeddings::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let (i, d) = nearest_neighbor(&[0.2, 0.2], &s, Metric::Linf).unwrap();
        assert_eq!(i, 0);
        assert!((d - 0.2).abs() < 1e-15);

        let (i, d) = nearest_neighbor(&[1.0, 1.0], &s, Metric::L2).unwrap();
        assert_eq!((i, d), (1, 0.0));

        let tie = Embeddings::from_rows(&[vec![0.0], vec![2.0], vec![0.0]]).unwrap();
        assert_eq!(nearest_neighbor(&[1.0], &tie, Metric::L1).unwrap().0, 0);

        assert!(matches!(
            nearest_neighbor(&[0.0], &Embeddings::new(1), Metric::L1),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn nearest_neighbor_matches_linear_scan_oracle() {
        let mut rng = substream(1, "test", 0);
        for trial in 0..300 {
            let dim = 1 + trial % 5;
            let n = 1 + trial % 40;
            // coarse grid so ties actually occur
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..dim)
                        .map(|_| rng.random_range(0..4) as f64 / 4.0)
                        .collect()
                })
                .collect();
            let x: Vec<f64> = (0..dim)
                .map(|_| rng.random_range(0..4) as f64 / 4.0)
                .collect();
            let e = Embeddings::from_rows(&pts).unwrap();
            for m in Metric::ALL {
                assert_eq!(nearest_neighbor(&x, &e, m).unwrap(), brute_nn(&x, &pts, m));
            }
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = substream(2, "test", 0);
        for _ in 0..10_000 {
            let dim = rng.random_range(1..8);
            let mut v = || -> Vec<f64> { (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect() };
            let (x, y, z) = (v(), v(), v());
            for m in Metric::ALL {
                let dxy = distance(&x, &y, m).unwrap();
                let dyx = distance(&y, &x, m).unwrap();
                let dxz = distance(&x, &z, m).unwrap();
                let dzy = distance(&z, &y, m).unwrap();
                assert!(dxy >= 0.0);
                assert!((dxy - dyx).abs() <= 1e-9);
                assert!(dxy <= dxz + dzy + 1e-9);
                assert!(dxy > 0.0 || x == y);
            }
        }
    }

    proptest! {
        #[test]
        fn norm_ordering_on_unit_cube(
            pair in (1usize..20).prop_flat_map(|d| (
                proptest::collection::vec(0.0f64..=1.0, d),
                proptest::collection::vec(0.0f64..=1.0, d),
            )),
        ) {
            let (x, y) = pair;
            let linf = distance(&x, &y, Metric::Linf).unwrap();
            let l2 = distance(&x, &y, Metric::L2).unwrap();
            let l1 = distance(&x, &y, Metric::L1).unwrap();
            prop_assert!(linf <= l2 + 1e-12);
            prop_assert!(l2 <= l1 + 1e-12);
        }
    }

    #[test]
    fn normalizer_maps_pool_into_unit_cube_and_clamps() {
        let pool =
            Embeddings::from_rows(&[vec![2.0, 5.0], vec![4.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let n = MinMaxNormalizer::fit(&pool).unwrap();
        let out = n.apply(&pool).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
        assert_eq!(out.row(1), &[1.0, 0.0]);
        assert_eq!(out.row(2), &[0.5, 0.0]);
        let q = Embeddings::from_rows(&[vec![10.0, -3.0]]).unwrap();
        assert_eq!(n.apply(&q).unwrap().row(0), &[1.0, 0.0]);
    }

    #[test]
    fn audit_two_clusters() {
        let mut rng = substream(3, "test", 0);
        let mut pts = Vec::new();
        for (label, cx) in [(0usize, 0.0f64), (1, 1.0)] {
            for i in 0..50 {
                let e = vec![
                    cx + rng.random_range(-0.1..=0.1),
                    rng.random_range(-0.1..=0.1),
                ];
                pts.push(LabeledPoint::new(format!("{label}-{i}"), e, label));
            }
        }
        let r = separation_audit(&pts, Metric::Linf).unwrap();
        assert!(r.min_interclass_distance >= 0.8);
        assert_eq!(r.duplicate_conflicts, 0);
        assert_eq!(r.pair_minima[0][1], Some(r.min_interclass_distance));
        assert_eq!(r.pair_minima[0][0], None);
    }

    #[test]
    fn audit_flags_conflicting_duplicates() {
        let pts = vec![
            LabeledPoint::new("a", vec![0.5, 0.5], 0),
            LabeledPoint::new("b", vec![0.5, 0.5], 1),
        ];
        let r = separation_audit(&pts, Metric::L2).unwrap();
        assert_eq!(r.duplicate_conflicts, 1);
        assert_eq!(r.min_interclass_distance, 0.0);

        let single = vec![LabeledPoint::new("a", vec![0.0], 0)];
        assert!(matches!(
            separation_audit(&single, Metric::L1),
            Err(Error::SingleClass(1))
        ));
    }

    #[test]
    fn nn_curve_edge_cases() {
        let mut rng = substream(4, "test", 0);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pool = Embeddings::from_rows(&rows).unwrap();
        let queries = pool.select(&[0, 5, 9]);
        let c = nn_distance_curve(&pool, &queries, &[30], Metric::L2, 3, 1).unwrap();
        assert_eq!(c[0].mean_distance, 0.0);
        assert!(matches!(
            nn_distance_curve(&pool, &queries, &[31], Metric::L2, 3, 1),
            Err(Error::SampleTooLarge { .. })
        ));

        // s = 1: each trial contributes the distance to one uniform point.
        let q = Embeddings::from_rows(&[vec![0.5, 0.5, 0.5]]).unwrap();
        let trials = 4000;
        let c = nn_distance_curve(&pool, &q, &[1], Metric::L1, trials, 9).unwrap();
        let exact: f64 = pool
            .rows()
            .map(|r| distance_unchecked(q.row(0), r, Metric::L1))
            .sum::<f64>()
            / pool.len() as f64;
        assert!(
            (c[0].mean_distance - exact).abs() < 0.03,
            "{} vs {exact}",
            c[0].mean_distance
        );
    }

    #[test]
    fn nn_curve_decreases_with_sample_size() {
        let mut rng = substream(5, "test", 0);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pool = Embeddings::from_rows(&rows).unwrap();
        let qrows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let queries = Embeddings::from_rows(&qrows).unwrap();
        let sizes = [5, 20, 80, 320];
        let c = nn_distance_curve(&pool, &queries, &sizes, Metric::Linf, 30, 11).unwrap();
        for w in c.windows(2) {
            assert!(w[1].mean_distance <= w[0].mean_distance, "{c:?}");
        }
    }
}
