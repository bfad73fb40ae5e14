#![allow(dead_code)]

use model_portfolio::estimator::{ProbabilityTable, ValidationPool};
use model_portfolio::metrics::{Embeddings, MinMaxNormalizer};
use model_portfolio::portfolio::LabeledPoint;
use model_portfolio::simulator::{
    generate_task, ladder, ladder_noise, softmax_predict, true_sp, SyntheticClassifier,
    SyntheticTask, TaskSpec,
};

/// A simulated task with its classifier ladder, a labelled pool carrying the
/// classifiers' outputs and fresh queries with their true success
/// probabilities. Pool and queries are min-max normalized on the pool.
pub struct Fixture {
    pub task: SyntheticTask,
    pub classifiers: Vec<SyntheticClassifier>,
    pub pool: ValidationPool,
    pub queries: Embeddings,
    /// `truth[i][j]`: success probability of classifier `i` on query `j`.
    pub truth: Vec<Vec<f64>>,
}

fn embeddings(points: &[LabeledPoint]) -> Embeddings {
    let rows: Vec<&[f64]> = points.iter().map(|p| p.embedding.as_slice()).collect();
    Embeddings::from_rows(&rows).unwrap()
}

pub fn fixture(
    seed: u64,
    costs: &[f64],
    pool_per_class: usize,
    queries_per_class: usize,
) -> Fixture {
    let task = generate_task(&TaskSpec::new(10, 16, 0.3, pool_per_class, seed)).unwrap();
    let classifiers = ladder(&task, costs, &ladder_noise(costs.len()), 0.003, 1e-3).unwrap();
    let queries = task.sample_points(queries_per_class, "queries", "q");

    let raw_pool = embeddings(&task.points);
    let normalizer = MinMaxNormalizer::fit(&raw_pool).unwrap();
    let outputs = classifiers
        .iter()
        .map(|c| {
            let rows: Vec<Vec<f64>> = task
                .points
                .iter()
                .map(|p| softmax_predict(c, &p.embedding).unwrap())
                .collect();
            ProbabilityTable::from_rows(&rows, task.classes, 1e-9).unwrap()
        })
        .collect();
    let pool = ValidationPool::new(
        task.points.iter().map(|p| p.id.clone()).collect(),
        normalizer.apply(&raw_pool).unwrap(),
        task.points.iter().map(|p| p.label).collect(),
        task.classes,
        outputs,
    )
    .unwrap();
    let truth = classifiers
        .iter()
        .map(|c| {
            queries
                .iter()
                .map(|q| true_sp(c, &task, &q.embedding).unwrap())
                .collect()
        })
        .collect();
    Fixture {
        queries: normalizer.apply(&embeddings(&queries)).unwrap(),
        task,
        classifiers,
        pool,
        truth,
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
