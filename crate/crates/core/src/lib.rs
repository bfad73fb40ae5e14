//! Budget-constrained assignment of classifiers to queries.
//!
//! Given a pool of classifiers with per-call costs, stored classifier outputs
//! on a labelled validation pool, and a batch of unlabelled queries, this
//! crate estimates each classifier's chance of being right on each query
//! from the query's nearest labelled neighbours and then picks one classifier
//! per query to maximize the estimated accuracy under a hard cost budget.
//!
//! - [`portfolio`]: assignment, accuracy and cost accounting
//! - [`metrics`]: distances, exact nearest neighbours, separation audits
//! - [`estimator`]: nearest-neighbour success-probability estimates and their spread
//! - [`solver`]: exact multiple-choice knapsack solvers
//! - [`simulator`]: separated synthetic tasks and soft classifiers with known accuracy
//! - [`harness`]: file formats, baselines, budget sweeps and experiment tables

pub mod error;
pub mod estimator;
pub mod harness;
pub mod metrics;
pub mod portfolio;
pub mod rng;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
