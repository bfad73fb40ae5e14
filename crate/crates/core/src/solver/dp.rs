//! Pseudo-polynomial dynamic program over integer-scaled costs.
//!
//! Costs become `round(b_i * scale)` budget units and the budget
//! `floor(B * scale)` units. `best[j][w]` is the best total score of queries
//! `j..N` using at most `w` units; a forward walk over the table then picks
//! the lowest classifier index at each query that keeps the optimum reachable.

use serde::{Deserialize, Serialize};

use super::{AssignmentProblem, Certificate, Solution, TIE_TOLERANCE};
use crate::error::{Error, Result};

/// Largest DP table, in cells, before [`solve_dp`] refuses.
pub const DP_MAX_CELLS: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub solution: Solution,
    pub scaled_costs: Vec<u64>,
    pub scaled_budget: u64,
    /// Budget lost to flooring, `B - scaled_budget / scale`.
    pub budget_slack: f64,
    /// Largest `|round(b_i * scale) / scale - b_i|`.
    pub max_cost_rounding: f64,
}

/// Exact optimum of the scaled instance.
pub fn solve_dp(problem: &AssignmentProblem, cost_scale: u64) -> Result<DpSolution> {
    problem.validate()?;
    if cost_scale == 0 {
        return Err(Error::InvalidInput("cost scale must be positive".into()));
    }
    let scale = cost_scale as f64;
    let (m, n) = (problem.classifiers(), problem.queries());

    let budget_units = (problem.capacity() * scale).floor();
    if !(budget_units >= 0.0 && budget_units < u32::MAX as f64) {
        return Err(Error::TableTooLarge {
            cells: (n as f64 + 1.0) * (budget_units.max(0.0) + 1.0),
        });
    }
    let w_max = budget_units as usize;
    let cells = (n + 1) as f64 * (w_max + 1) as f64;
    if cells > DP_MAX_CELLS as f64 {
        return Err(Error::TableTooLarge { cells });
    }

    let mut weights = Vec::with_capacity(m);
    for &b in &problem.costs {
        let w = (b * scale).round();
        if w >= u32::MAX as f64 {
            return Err(Error::TableTooLarge { cells });
        }
        weights.push(w as usize);
    }
    let max_cost_rounding = problem
        .costs
        .iter()
        .zip(&weights)
        .map(|(&b, &w)| (w as f64 / scale - b).abs())
        .fold(0.0, f64::max);

    // best[j * width + w], rows j = 0..=n
    let width = w_max + 1;
    let mut best = vec![f64::NEG_INFINITY; (n + 1) * width];
    best[n * width..].fill(0.0);
    for j in (0..n).rev() {
        let (head, tail) = best.split_at_mut((j + 1) * width);
        let row = &mut head[j * width..];
        let next = &tail[..width];
        for (c, &wc) in weights.iter().enumerate() {
            let score = problem.scores[c][j];
            for w in wc..width {
                let v = next[w - wc] + score;
                if v > row[w] {
                    row[w] = v;
                }
            }
        }
    }

    let optimum = best[w_max];
    if optimum == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            min_budget: problem.min_budget(),
            budget: problem.budget,
        });
    }

    let target = optimum - TIE_TOLERANCE;
    let mut choices = Vec::with_capacity(n);
    let mut left = w_max;
    let mut acc = 0.0;
    for j in 0..n {
        let next = &best[(j + 1) * width..(j + 2) * width];
        let pick = (0..m)
            .find(|&c| {
                weights[c] <= left && acc + problem.scores[c][j] + next[left - weights[c]] >= target
            })
            .expect("the optimum stays reachable along the walk");
        acc += problem.scores[pick][j];
        left -= weights[pick];
        choices.push(pick);
    }

    let solution = problem.solution(choices, Certificate::ProvenOptimal);
    if solution.cost > problem.capacity() {
        return Err(Error::InvalidInput(format!(
            "cost rounding at scale {cost_scale} overruns the budget ({} > {}); increase the scale",
            solution.cost, problem.budget
        )));
    }
    Ok(DpSolution {
        solution,
        scaled_costs: weights.iter().map(|&w| w as u64).collect(),
        scaled_budget: w_max as u64,
        budget_slack: problem.budget - w_max as f64 / scale,
        max_cost_rounding,
    })
}
