//! Exact solver for the budgeted one-classifier-per-query assignment.
//!
//! The problem is a multiple-choice knapsack: each query is a group, each
//! classifier an item with value `scores[i][j]` and weight `costs[i]`, and
//! exactly one item per group must be picked under a total weight limit.
//!
//! The exact routes share one tie-breaking rule and are checked against
//! each other in tests:
//!
//! - [`solve`]: dynamic programming over Pareto frontiers of `(cost, value)`
//!   pairs with LP-based pruning, falling back to branch-and-bound if the
//!   frontiers grow too large,
//! - [`solve_branch_and_bound`]: depth-first branch-and-bound over the LP relaxation,
//! - [`solve_dp`]: dynamic programming over integer-scaled costs,
//! - [`brute_force`]: exhaustive enumeration for small instances.
//!
//! Among assignments whose objective is within [`TIE_TOLERANCE`] of the
//! optimum, the lexicographically smallest choice vector wins: the first
//! query gets the lowest classifier index possible, then the second, and so on.

mod bnb;
mod brute;
mod dp;
mod frontier;
mod lp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::portfolio::{compensated_sum, BUDGET_TOLERANCE};

pub use bnb::solve_branch_and_bound;
pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use dp::{solve_dp, DpSolution, DP_MAX_CELLS};
pub use frontier::MAX_FRONTIER_STATES;

/// Objectives closer than this are treated as equal for tie-breaking.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Default branch-and-bound stopping gap.
pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentProblem {
    /// `scores[i][j]`: value of giving query `j` to classifier `i`.
    pub scores: Vec<Vec<f64>>,
    /// Per-call cost of each classifier.
    pub costs: Vec<f64>,
    pub budget: f64,
    pub gap_tolerance: f64,
}

impl AssignmentProblem {
    pub fn new(scores: Vec<Vec<f64>>, costs: Vec<f64>, budget: f64) -> Self {
        AssignmentProblem {
            scores,
            costs,
            budget,
            gap_tolerance: DEFAULT_GAP_TOLERANCE,
        }
    }

    pub fn classifiers(&self) -> usize {
        self.costs.len()
    }

    pub fn queries(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Budget with the shared summation slack added.
    pub(crate) fn capacity(&self) -> f64 {
        self.budget + BUDGET_TOLERANCE * self.budget.abs().max(1.0)
    }

    pub fn min_budget(&self) -> f64 {
        let cheapest = self.costs.iter().copied().fold(f64::INFINITY, f64::min);
        self.queries() as f64 * cheapest
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = self.costs.len();
        if m == 0 {
            return Err(Error::InvalidInput("no classifiers".into()));
        }
        if self.scores.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: self.scores.len(),
            });
        }
        let n = self.queries();
        for row in &self.scores {
            if row.len() != n {
                return Err(Error::DataIntegrity("ragged score matrix".into()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite score".into()));
            }
        }
        if self.costs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidInput(
                "costs must be positive and finite".into(),
            ));
        }
        if !self.budget.is_finite() {
            return Err(Error::InvalidInput("budget must be finite".into()));
        }
        if !(self.gap_tolerance.is_finite() && self.gap_tolerance >= 0.0) {
            return Err(Error::InvalidInput(
                "gap tolerance must be non-negative".into(),
            ));
        }
        let min_budget = self.min_budget();
        if n > 0 && min_budget > self.capacity() {
            return Err(Error::Infeasible {
                min_budget,
                budget: self.budget,
            });
        }
        Ok(())
    }

    pub fn objective_of(&self, choices: &[usize]) -> f64 {
        compensated_sum(choices.iter().enumerate().map(|(j, &c)| self.scores[c][j]))
    }

    pub fn cost_of(&self, choices: &[usize]) -> f64 {
        compensated_sum(choices.iter().map(|&c| self.costs[c]))
    }

    pub(crate) fn solution(&self, choices: Vec<usize>, certificate: Certificate) -> Solution {
        Solution {
            objective: self.objective_of(&choices),
            cost: self.cost_of(&choices),
            choices,
            certificate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "gap", rename_all = "snake_case")]
pub enum Certificate {
    ProvenOptimal,
    /// Search stopped with the optimum at most this far above the objective.
    Gap(f64),
}

impl std::fmt::Display for Certificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Certificate::ProvenOptimal => f.write_str("optimal"),
            Certificate::Gap(g) => write!(f, "gap={g:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// `choices[j]` is the classifier assigned to query `j`.
    pub choices: Vec<usize>,
    pub objective: f64,
    pub cost: f64,
    pub certificate: Certificate,
}

/// Exact optimum with canonical tie-breaking.
pub fn solve(problem: &AssignmentProblem) -> Result<Solution> {
    problem.validate()?;
    match frontier::solve_frontier(problem) {
        Some(solution) => Ok(solution),
        None => {
            log::info!("frontier exceeded {MAX_FRONTIER_STATES} states; using branch-and-bound");
            solve_branch_and_bound(problem)
        }
    }
}

/// Upper bound on the integer optimum from the linear relaxation.
pub fn lp_bound(problem: &AssignmentProblem) -> Result<f64> {
    problem.validate()?;
    let relax = lp::Relaxation::new(problem);
    let assigned = vec![None; problem.queries()];
    match relax.evaluate(problem, &assigned) {
        lp::NodeLp::Infeasible => Err(Error::Infeasible {
            min_budget: problem.min_budget(),
            budget: problem.budget,
        }),
        lp::NodeLp::Bounded(node) => Ok(node.bound),
    }
}

/// Per-query greedy: best score-per-cost upgrade first, never exceeding the
/// budget. Used as a baseline in tests and as a sanity reference.
pub fn greedy(problem: &AssignmentProblem) -> Result<Solution> {
    problem.validate()?;
    let relax = lp::Relaxation::new(problem);
    let assigned = vec![None; problem.queries()];
    match relax.evaluate(problem, &assigned) {
        lp::NodeLp::Infeasible => Err(Error::Infeasible {
            min_budget: problem.min_budget(),
            budget: problem.budget,
        }),
        lp::NodeLp::Bounded(node) => {
            let gap = (node.bound - node.rounded_value).max(0.0);
            Ok(problem.solution(node.rounded, Certificate::Gap(gap)))
        }
    }
}
