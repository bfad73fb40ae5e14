//! Synthetic separated classification tasks and soft classifiers whose
//! success probability is known exactly.
//!
//! Class regions are LINF balls of half-width `radius` around centers whose
//! pairwise LINF distance is at least `declared_r + 2 * radius`, so points of
//! different classes are always at least `declared_r` apart. Within a region,
//! points lie on a random low-dimensional linear patch through the center.
//!
//! A classifier scores class `c` with `-scale * ||x - prototype_c||_1` and
//! applies a softmax at temperature `tau`. Its prototypes are the task centers
//! plus Gaussian noise; the noise level is the accuracy dial.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{distance_unchecked, Metric};
use crate::portfolio::LabeledPoint;
use crate::rng::substream;

/// Attempts per center before packing is declared infeasible.
pub const PACKING_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub classes: usize,
    pub dim: usize,
    pub declared_r: f64,
    pub radius: f64,
    pub points_per_class: usize,
    /// Intrinsic dimension of each class region.
    pub manifold_dim: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(
        classes: usize,
        dim: usize,
        declared_r: f64,
        points_per_class: usize,
        seed: u64,
    ) -> Self {
        TaskSpec {
            classes,
            dim,
            declared_r,
            radius: 0.1,
            points_per_class,
            manifold_dim: 2,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub classes: usize,
    pub dim: usize,
    pub declared_r: f64,
    pub radius: f64,
    pub centers: Vec<Vec<f64>>,
    /// Per class, `dim` rows of `manifold_dim` weights with row L1 norm 1.
    pub bases: Vec<Vec<Vec<f64>>>,
    pub points: Vec<LabeledPoint>,
    pub seed: u64,
}

pub fn generate_task(spec: &TaskSpec) -> Result<SyntheticTask> {
    if spec.classes < 2 {
        return Err(Error::SingleClass(spec.classes));
    }
    if spec.dim == 0 || spec.manifold_dim == 0 {
        return Err(Error::InvalidInput("dimensions must be positive".into()));
    }
    if !(spec.declared_r > 0.0 && spec.radius >= 0.0 && spec.radius < 0.5) {
        return Err(Error::InvalidInput(format!(
            "need r > 0 and 0 <= radius < 0.5, got r = {}, radius = {}",
            spec.declared_r, spec.radius
        )));
    }

    let separation = spec.declared_r + 2.0 * spec.radius;
    let infeasible = || Error::PackingInfeasible {
        classes: spec.classes,
        dim: spec.dim,
        separation,
    };
    let (lo, hi) = (spec.radius, 1.0 - spec.radius);
    if separation > hi - lo {
        return Err(infeasible());
    }

    let mut rng = substream(spec.seed, "centers", 0);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    for _ in 0..spec.classes {
        let mut placed = false;
        for _ in 0..PACKING_ATTEMPTS {
            let c: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(lo..=hi)).collect();
            if centers
                .iter()
                .all(|o| distance_unchecked(o, &c, Metric::Linf) >= separation)
            {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(infeasible());
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut bases = Vec::with_capacity(spec.classes);
    for class in 0..spec.classes {
        let mut rng = substream(spec.seed, "basis", class as u64);
        let basis: Vec<Vec<f64>> = (0..spec.dim)
            .map(|_| {
                let mut row: Vec<f64> = (0..spec.manifold_dim)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                let norm: f64 = row.iter().map(|v| v.abs()).sum();
                row.iter_mut().for_each(|v| *v /= norm);
                row
            })
            .collect();
        bases.push(basis);
    }

    let mut points = Vec::with_capacity(spec.classes * spec.points_per_class);
    for class in 0..spec.classes {
        let mut rng = substream(spec.seed, "points", class as u64);
        for _ in 0..spec.points_per_class {
            let u: Vec<f64> = (0..spec.manifold_dim)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect();
            let embedding = point_on_patch(&centers[class], &bases[class], &u, spec.radius);
            let id = format!("x{:06}", points.len());
            points.push(LabeledPoint::new(id, embedding, class));
        }
    }

    Ok(SyntheticTask {
        classes: spec.classes,
        dim: spec.dim,
        declared_r: spec.declared_r,
        radius: spec.radius,
        centers,
        bases,
        points,
        seed: spec.seed,
    })
}

fn point_on_patch(center: &[f64], basis: &[Vec<f64>], u: &[f64], radius: f64) -> Vec<f64> {
    center
        .iter()
        .zip(basis)
        .map(|(c, row)| {
            let offset: f64 = row.iter().zip(u).map(|(w, v)| w * v).sum();
            // |offset| <= 1 because the row has L1 norm 1 and |v| <= 1
            (c + radius * offset.clamp(-1.0, 1.0)).clamp(0.0, 1.0)
        })
        .collect()
}

impl SyntheticTask {
    /// Fresh points from the same class regions, independent of `points`.
    pub fn sample_points(
        &self,
        per_class: usize,
        stream: &str,
        id_prefix: &str,
    ) -> Vec<LabeledPoint> {
        let k = self.bases[0][0].len();
        let mut out = Vec::with_capacity(self.classes * per_class);
        for class in 0..self.classes {
            let mut rng = substream(self.seed, stream, class as u64);
            for _ in 0..per_class {
                let u: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let embedding =
                    point_on_patch(&self.centers[class], &self.bases[class], &u, self.radius);
                let id = format!("{id_prefix}{:06}", out.len());
                out.push(LabeledPoint::new(id, embedding, class));
            }
        }
        out
    }

    /// Lipschitz constant of the one-hot oracle, `2 / r`.
    pub fn oracle_lipschitz(&self) -> f64 {
        2.0 / self.declared_r
    }
}

/// Class of the region containing `x`.
pub fn oracle_label(task: &SyntheticTask, x: &[f64]) -> Result<usize> {
    if x.len() != task.dim {
        return Err(Error::DimensionMismatch {
            expected: task.dim,
            found: x.len(),
        });
    }
    let (class, d) = task
        .centers
        .iter()
        .map(|c| distance_unchecked(c, x, Metric::Linf))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two classes");
    if d <= task.radius + 1e-12 {
        Ok(class)
    } else {
        Err(Error::OffManifold)
    }
}

/// `softmax(z / tau)`, shifted by the largest logit.
pub fn softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidInput(
            "logits must be finite and nonempty".into(),
        ));
    }
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| ((z - top) / tau).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassifier {
    pub index: usize,
    pub name: String,
    pub cost: f64,
    pub prototypes: Vec<Vec<f64>>,
    /// Logit scale `kappa`.
    pub scale: f64,
    pub temperature: f64,
}

impl SyntheticClassifier {
    /// Prototypes are the task centers plus `N(0, noise^2)` per coordinate.
    pub fn perturbed(
        task: &SyntheticTask,
        index: usize,
        name: impl Into<String>,
        cost: f64,
        noise: f64,
        scale: f64,
        temperature: f64,
    ) -> Result<Self> {
        let directions = gaussian_directions(task, "prototypes", index as u64);
        SyntheticClassifier::displaced(
            task,
            index,
            name,
            cost,
            noise,
            &directions,
            scale,
            temperature,
        )
    }

    /// Prototypes `center + noise * direction`.
    #[allow(clippy::too_many_arguments)]
    fn displaced(
        task: &SyntheticTask,
        index: usize,
        name: impl Into<String>,
        cost: f64,
        noise: f64,
        directions: &[Vec<f64>],
        scale: f64,
        temperature: f64,
    ) -> Result<Self> {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise must be non-negative, got {noise}"
            )));
        }
        let prototypes = task
            .centers
            .iter()
            .zip(directions)
            .map(|(c, d)| c.iter().zip(d).map(|(v, e)| v + noise * e).collect())
            .collect();
        SyntheticClassifier::with_prototypes(index, name, cost, prototypes, scale, temperature)
    }

    pub fn with_prototypes(
        index: usize,
        name: impl Into<String>,
        cost: f64,
        prototypes: Vec<Vec<f64>>,
        scale: f64,
        temperature: f64,
    ) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "logit scale must be positive, got {scale}"
            )));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if !(cost.is_finite() && cost > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cost must be positive, got {cost}"
            )));
        }
        Ok(SyntheticClassifier {
            index,
            name: name.into(),
            cost,
            prototypes,
            scale,
            temperature,
        })
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.prototypes
            .iter()
            .map(|p| -self.scale * distance_unchecked(p, x, Metric::L1))
            .collect()
    }

    /// Lipschitz constant of `x -> f(x)` from `metric` on inputs to L1 on
    /// probability vectors.
    ///
    /// Each logit is `scale`-Lipschitz in L1 and the softmax at temperature
    /// `tau` is `1/tau`-Lipschitz from LINF logits to L1 probabilities.
    pub fn lipschitz(&self, metric: Metric) -> f64 {
        let d = self.prototypes.first().map_or(0, Vec::len) as f64;
        let input = match metric {
            Metric::L1 => 1.0,
            Metric::L2 => d.sqrt(),
            Metric::Linf => d,
        };
        self.scale / self.temperature * input
    }

    /// Lipschitz constant of `x -> SP(x)` on `task`: `max(L_i, L_O / 2)`.
    pub fn sp_lipschitz(&self, task: &SyntheticTask, metric: Metric) -> f64 {
        self.lipschitz(metric).max(task.oracle_lipschitz() / 2.0)
    }
}

pub fn softmax_predict(classifier: &SyntheticClassifier, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != classifier.prototypes[0].len() {
        return Err(Error::DimensionMismatch {
            expected: classifier.prototypes[0].len(),
            found: x.len(),
        });
    }
    softmax(&classifier.logits(x), classifier.temperature)
}

/// The exact success probability `f(x)[O(x)]`.
pub fn true_sp(classifier: &SyntheticClassifier, task: &SyntheticTask, x: &[f64]) -> Result<f64> {
    let label = oracle_label(task, x)?;
    Ok(softmax_predict(classifier, x)?[label])
}

/// Normalized per-call costs of the reference classifier roster, cheapest first.
pub const REFERENCE_COSTS: [f64; 7] = [0.15, 0.22, 0.29, 0.52, 0.53, 0.98, 1.0];

/// Default prototype noise for a ladder of `m` classifiers, decreasing so
/// that accuracy grows with cost.
pub fn ladder_noise(m: usize) -> Vec<f64> {
    let (worst, best) = (0.45, 0.1);
    (0..m)
        .map(|i| {
            if m == 1 {
                best
            } else {
                worst + (best - worst) * i as f64 / (m - 1) as f64
            }
        })
        .collect()
}

fn gaussian_directions(task: &SyntheticTask, stream: &str, index: u64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = substream(task.seed, stream, index);
    (0..task.classes)
        .map(|_| (0..task.dim).map(|_| normal.sample(&mut rng)).collect())
        .collect()
}

/// Correlation between the prototype displacements of two ladder classifiers.
pub const LADDER_NOISE_CORRELATION: f64 = 0.95;

/// Classifiers `clf0..clf{m-1}` with the given costs and noise levels.
///
/// Displacement directions share a common component, so a classifier with
/// less noise is usually more accurate than one with more.
pub fn ladder(
    task: &SyntheticTask,
    costs: &[f64],
    noise: &[f64],
    scale: f64,
    temperature: f64,
) -> Result<Vec<SyntheticClassifier>> {
    if costs.len() != noise.len() {
        return Err(Error::DimensionMismatch {
            expected: costs.len(),
            found: noise.len(),
        });
    }
    let shared = gaussian_directions(task, "ladder-shared", 0);
    let rho = LADDER_NOISE_CORRELATION;
    let own = (1.0 - rho * rho).sqrt();
    costs
        .iter()
        .zip(noise)
        .enumerate()
        .map(|(i, (&c, &n))| {
            let directions: Vec<Vec<f64>> = gaussian_directions(task, "prototypes", i as u64)
                .iter()
                .zip(&shared)
                .map(|(w, z)| w.iter().zip(z).map(|(a, b)| rho * b + own * a).collect())
                .collect();
            SyntheticClassifier::displaced(
                task,
                i,
                format!("clf{i}"),
                c,
                n,
                &directions,
                scale,
                temperature,
            )
        })
        .collect()
}
