//! Dynamic programming over Pareto frontiers, exact for real-valued costs.
//!
//! Queries are processed from last to first. The frontier of stage `j` holds
//! the non-dominated `(cost, value)` pairs reachable by assigning queries
//! `j..N`. A state is dropped when even the Lagrangian bound of the
//! unassigned prefix `0..j` (multiplier taken from the LP relaxation) cannot
//! lift it to within [`TIE_TOLERANCE`] of a known feasible value. The first
//! pass prunes against a guess just below the LP bound; the guess is widened
//! until the best surviving value shows that nothing better was dropped.
//!
//! A forward walk over the stored frontiers then picks, query by query, the
//! lowest classifier that keeps a near-optimal completion reachable.

use super::lp::{NodeLp, Relaxation};
use super::{AssignmentProblem, Certificate, Solution, TIE_TOLERANCE};

/// Total frontier states kept across all stages before giving up.
pub const MAX_FRONTIER_STATES: usize = 20_000_000;

#[derive(Debug, Clone, Copy)]
struct State {
    cost: f64,
    value: f64,
}

/// Largest value among states with cost at most `budget`, if any.
fn best_within(frontier: &[State], budget: f64) -> Option<f64> {
    let k = frontier.partition_point(|s| s.cost <= budget);
    (k > 0).then(|| frontier[k - 1].value)
}

/// Frontiers for every stage keeping only states whose Lagrangian bound
/// reaches `threshold`; `None` past [`MAX_FRONTIER_STATES`].
fn build(
    problem: &AssignmentProblem,
    relax: &Relaxation,
    rho: f64,
    prefix_bound: &[f64],
    threshold: f64,
) -> Option<Vec<Vec<State>>> {
    let n = problem.queries();
    let cap = problem.capacity();
    let cheapest = problem.costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut frontiers: Vec<Vec<State>> = vec![Vec::new(); n + 1];
    frontiers[n] = vec![State {
        cost: 0.0,
        value: 0.0,
    }];
    let mut total = 1usize;
    for j in (0..n).rev() {
        let room = cap - cheapest * j as f64;
        let mut merged = Vec::new();
        for item in &relax.efficient[j] {
            for s in &frontiers[j + 1] {
                let cost = s.cost + item.cost;
                let value = s.value + item.score;
                if cost > room {
                    // later states only cost more
                    break;
                }
                if value + rho * (cap - cost) + prefix_bound[j] >= threshold {
                    merged.push(State { cost, value });
                }
            }
        }
        merged.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(b.value.total_cmp(&a.value)));
        let mut kept: Vec<State> = Vec::with_capacity(merged.len());
        for s in merged {
            if kept.last().is_none_or(|last| s.value > last.value) {
                kept.push(s);
            }
        }
        total += kept.len();
        if total > MAX_FRONTIER_STATES {
            return None;
        }
        frontiers[j] = kept;
    }
    Some(frontiers)
}

/// Exact optimum, or `None` when the frontiers outgrow [`MAX_FRONTIER_STATES`].
/// The instance must already be validated.
pub(crate) fn solve_frontier(problem: &AssignmentProblem) -> Option<Solution> {
    let (m, n) = (problem.classifiers(), problem.queries());
    let cap = problem.capacity();
    let relax = Relaxation::new(problem);
    let NodeLp::Bounded(root) = relax.evaluate(problem, &vec![None; n]) else {
        unreachable!("validated instance has a feasible assignment")
    };
    let rho = root.ratio;

    // prefix_bound[j] = sum over k < j of max_c (score - rho * cost)
    let mut prefix_bound = Vec::with_capacity(n + 1);
    prefix_bound.push(0.0);
    for j in 0..n {
        let best = (0..m)
            .map(|c| problem.scores[c][j] - rho * problem.costs[c])
            .fold(f64::NEG_INFINITY, f64::max);
        prefix_bound.push(prefix_bound[j] + best);
    }
    let margin = 1e-9 * (1.0 + root.bound.abs() + rho * cap.abs());
    // Every state that can complete within TIE_TOLERANCE of `value` survives
    // a build at `keep(value)`.
    let keep = |value: f64| value - TIE_TOLERANCE - margin;
    // The rounded LP assignment is feasible, so this threshold is always safe.
    let safe = keep(root.rounded_value);

    // Start just below the LP bound and widen until the best surviving value
    // proves that nothing better was pruned.
    let mut gap = ((root.bound - root.rounded_value) / 256.0).max(TIE_TOLERANCE);
    let mut floor = safe;
    let (frontiers, optimum) = loop {
        let threshold = (root.bound - gap).max(floor);
        let frontiers = build(problem, &relax, rho, &prefix_bound, threshold)?;
        match best_within(&frontiers[0], cap) {
            Some(v) if keep(v) >= threshold || threshold <= floor => break (frontiers, v),
            // v is feasible, so its own threshold is safe
            Some(v) => floor = floor.max(keep(v)),
            None => {}
        }
        gap *= 8.0;
    };

    let target = optimum - TIE_TOLERANCE;
    // absorbs summation-order differences between frontier costs and the walk
    let slack = 1e-12 * (1.0 + cap.abs());
    let mut choices = Vec::with_capacity(n);
    let mut left = cap;
    let mut acc = 0.0;
    for j in 0..n {
        let pick = (0..m)
            .find(|&c| {
                let rest = left - problem.costs[c];
                rest >= -slack
                    && best_within(&frontiers[j + 1], rest + slack)
                        .is_some_and(|v| acc + problem.scores[c][j] + v >= target)
            })
            .expect("the optimum stays reachable along the walk");
        acc += problem.scores[pick][j];
        left -= problem.costs[pick];
        choices.push(pick);
    }
    Some(problem.solution(choices, Certificate::ProvenOptimal))
}
