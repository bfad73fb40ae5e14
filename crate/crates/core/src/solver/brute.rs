//! Exhaustive enumeration, the verification oracle for the other routes.

use super::{AssignmentProblem, Certificate, Solution, TIE_TOLERANCE};
use crate::error::{Error, Result};

/// Largest number of assignments `M^N` that [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

struct Enumeration<'a> {
    problem: &'a AssignmentProblem,
    cap: f64,
    cheapest: f64,
    choices: Vec<usize>,
}

impl Enumeration<'_> {
    /// Visits every feasible assignment in lexicographic order; stops early
    /// when `visit` returns `true`.
    fn run(&mut self, j: usize, spent: f64, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        let n = self.choices.len();
        if j == n {
            if self.problem.cost_of(&self.choices) <= self.cap {
                return visit(&self.choices);
            }
            return false;
        }
        let rest = self.cheapest * (n - j - 1) as f64;
        for c in 0..self.problem.costs.len() {
            let s = spent + self.problem.costs[c];
            // slack keeps rounding in the running sum from pruning a leaf
            // that the exact leaf check would accept
            if s + rest > self.cap + 1e-12 {
                continue;
            }
            self.choices[j] = c;
            if self.run(j + 1, s, visit) {
                return true;
            }
        }
        false
    }
}

/// Enumerates all `M^N` assignments. Same tie-breaking as the other routes:
/// the lexicographically first assignment within [`TIE_TOLERANCE`] of the best.
pub fn brute_force(problem: &AssignmentProblem) -> Result<Solution> {
    problem.validate()?;
    let (m, n) = (problem.classifiers(), problem.queries());
    let space = (m as f64).powi(n as i32);
    if space > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(space));
    }
    let mut e = Enumeration {
        problem,
        cap: problem.capacity(),
        cheapest: problem.costs.iter().copied().fold(f64::INFINITY, f64::min),
        choices: vec![0; n],
    };

    let mut best = f64::NEG_INFINITY;
    e.run(0, 0.0, &mut |c| {
        best = best.max(problem.objective_of(c));
        false
    });
    if best == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            min_budget: problem.min_budget(),
            budget: problem.budget,
        });
    }

    let mut winner = None;
    e.run(0, 0.0, &mut |c| {
        if problem.objective_of(c) >= best - TIE_TOLERANCE {
            winner = Some(c.to_vec());
            true
        } else {
            false
        }
    });
    let choices = winner.expect("the maximum is attained");
    Ok(problem.solution(choices, Certificate::ProvenOptimal))
}
