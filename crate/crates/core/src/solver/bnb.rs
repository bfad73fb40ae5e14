//! Depth-first branch-and-bound.
//!
//! Each node fixes some queries to a classifier. Its LP relaxation gives an
//! upper bound and a rounded feasible assignment; the relaxation has at most
//! one fractional query, and that query is the one branched on, with one
//! child per non-dominated classifier.
//!
//! After the optimum value is known, a second pass walks the queries in
//! order and, for each, looks for the lowest classifier index that still
//! admits a completion within [`TIE_TOLERANCE`] of the optimum. That pass
//! produces the canonical (lexicographically smallest) optimal assignment.

use super::lp::{NodeLp, Relaxation};
use super::{AssignmentProblem, Certificate, Solution, TIE_TOLERANCE};
use crate::error::Result;

/// Node budget per search; past it the incumbent is returned with a gap.
const MAX_NODES: usize = 2_000_000;

#[derive(Debug, Clone, Copy)]
enum Goal {
    Maximize {
        gap_tolerance: f64,
    },
    /// Stop at the first assignment whose objective reaches the target.
    Reach {
        target: f64,
    },
}

#[derive(Debug)]
struct SearchOutcome {
    best: Option<(Vec<usize>, f64)>,
    /// Largest bound among nodes pruned against the incumbent.
    max_pruned_bound: f64,
    complete: bool,
}

fn search(
    problem: &AssignmentProblem,
    relax: &Relaxation,
    root: Vec<Option<usize>>,
    goal: Goal,
) -> SearchOutcome {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut max_pruned_bound = f64::NEG_INFINITY;
    let mut stack = vec![root];
    let mut nodes = 0usize;

    while let Some(node) = stack.pop() {
        nodes += 1;
        if nodes > MAX_NODES {
            return SearchOutcome {
                best,
                max_pruned_bound: f64::INFINITY,
                complete: false,
            };
        }
        let NodeLp::Bounded(lp) = relax.evaluate(problem, &node) else {
            continue;
        };
        match goal {
            Goal::Maximize { gap_tolerance } => {
                let incumbent = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1);
                if lp.bound <= incumbent + gap_tolerance {
                    max_pruned_bound = max_pruned_bound.max(lp.bound);
                    continue;
                }
                if lp.rounded_value > incumbent {
                    best = Some((lp.rounded.clone(), lp.rounded_value));
                }
            }
            Goal::Reach { target } => {
                if lp.bound < target {
                    continue;
                }
                if lp.rounded_value >= target {
                    return SearchOutcome {
                        best: Some((lp.rounded, lp.rounded_value)),
                        max_pruned_bound,
                        complete: true,
                    };
                }
            }
        }
        let Some(frac) = lp.fractional else {
            continue;
        };

        // Children are pushed so the LP's preferred items are explored first.
        let q = frac.query;
        let mut order: Vec<usize> = relax.efficient[q].iter().map(|it| it.class).collect();
        order.sort_by(|&a, &b| {
            let rank = |c: usize| {
                if c == frac.upper {
                    0
                } else if c == frac.lower {
                    1
                } else {
                    2
                }
            };
            rank(a)
                .cmp(&rank(b))
                .then(problem.scores[b][q].total_cmp(&problem.scores[a][q]))
                .then(a.cmp(&b))
        });
        for &c in order.iter().rev() {
            let mut child = node.clone();
            child[q] = Some(c);
            stack.push(child);
        }
    }

    SearchOutcome {
        best,
        max_pruned_bound,
        complete: true,
    }
}

/// Rewrites an optimal assignment into the lexicographically smallest one
/// whose objective is within [`TIE_TOLERANCE`] of `value`.
fn canonicalize(
    problem: &AssignmentProblem,
    relax: &Relaxation,
    mut current: Vec<usize>,
    value: f64,
) -> Vec<usize> {
    let n = current.len();
    let target = value - TIE_TOLERANCE;
    let cap = problem.capacity();
    let cheapest = problem.costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut spent = 0.0;

    for j in 0..n {
        let rest = cheapest * (n - j - 1) as f64;
        for c in 0..current[j] {
            if spent + problem.costs[c] + rest > cap {
                continue;
            }
            assigned[j] = Some(c);
            let found = search(problem, relax, assigned.clone(), Goal::Reach { target });
            if let Some((choices, _)) = found.best {
                current = choices;
                break;
            }
        }
        assigned[j] = Some(current[j]);
        spent += problem.costs[current[j]];
    }
    current
}

/// Exact optimum by branch-and-bound, with canonical tie-breaking.
///
/// The returned certificate is [`Certificate::ProvenOptimal`] unless some
/// subtree was pruned within `gap_tolerance` of the incumbent, in which case
/// it carries the largest such remaining gap.
pub fn solve_branch_and_bound(problem: &AssignmentProblem) -> Result<Solution> {
    problem.validate()?;
    let n = problem.queries();
    if n == 0 {
        return Ok(problem.solution(Vec::new(), Certificate::ProvenOptimal));
    }
    let relax = Relaxation::new(problem);
    let outcome = search(
        problem,
        &relax,
        vec![None; n],
        Goal::Maximize {
            gap_tolerance: problem.gap_tolerance,
        },
    );
    let (choices, value) = outcome
        .best
        .expect("validated instance has a feasible assignment");
    let gap = (outcome.max_pruned_bound - value).max(0.0);
    if !outcome.complete {
        log::warn!("branch-and-bound node limit reached; returning incumbent");
        return Ok(problem.solution(choices, Certificate::Gap(gap)));
    }
    let choices = canonicalize(problem, &relax, choices, value);
    let certificate = if gap > 0.0 {
        Certificate::Gap(gap)
    } else {
        Certificate::ProvenOptimal
    };
    Ok(problem.solution(choices, certificate))
}
