//! Linear relaxation of the multiple-choice knapsack.
//!
//! Per query, dominated items (costlier and no better) are dropped and the
//! remaining items are reduced to their upper concave hull in the
//! (cost, score) plane. Starting from every query's cheapest hull item, the
//! hull upgrades are taken in order of decreasing score gained per unit of
//! cost until the budget runs out; the first upgrade that does not fit is
//! taken fractionally. This greedy is the exact LP optimum.

use super::AssignmentProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Item {
    pub class: usize,
    pub score: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy)]
struct Increment {
    query: usize,
    /// Hull level reached by taking this increment.
    to: usize,
    dscore: f64,
    dcost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Fractional {
    pub query: usize,
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NodeSolution {
    pub bound: f64,
    pub fractional: Option<Fractional>,
    /// A feasible integer assignment built from the same greedy pass.
    pub rounded: Vec<usize>,
    pub rounded_value: f64,
    /// Score per unit cost of the fractional increment, 0 when none is
    /// fractional. A valid Lagrange multiplier for the budget constraint.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum NodeLp {
    Infeasible,
    Bounded(NodeSolution),
}

#[derive(Debug, Clone)]
pub(crate) struct Relaxation {
    /// Non-dominated items per query, strictly increasing in cost and score.
    pub efficient: Vec<Vec<Item>>,
    hull: Vec<Vec<Item>>,
    increments: Vec<Increment>,
}

fn efficiency(a: &Item, b: &Item) -> f64 {
    (b.score - a.score) / (b.cost - a.cost)
}

/// Items not dominated by a cheaper-or-equal, better-or-equal item.
/// Equal items resolve towards the lower classifier index.
pub(crate) fn efficient_items(problem: &AssignmentProblem, query: usize) -> Vec<Item> {
    let mut items: Vec<Item> = problem
        .costs
        .iter()
        .enumerate()
        .map(|(class, &cost)| Item {
            class,
            score: problem.scores[class][query],
            cost,
        })
        .collect();
    items.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(b.score.total_cmp(&a.score))
            .then(a.class.cmp(&b.class))
    });
    let mut kept: Vec<Item> = Vec::with_capacity(items.len());
    for it in items {
        if kept
            .last()
            .is_none_or(|last| it.score > last.score && it.cost > last.cost)
        {
            kept.push(it);
        }
    }
    kept
}

/// Upper concave hull of efficient items, with collinear middle points removed.
fn upper_hull(items: &[Item]) -> Vec<Item> {
    let mut hull: Vec<Item> = Vec::with_capacity(items.len());
    for &p in items {
        while hull.len() >= 2 {
            let (a, b) = (&hull[hull.len() - 2], &hull[hull.len() - 1]);
            if efficiency(a, b) <= efficiency(b, &p) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

impl Relaxation {
    pub fn new(problem: &AssignmentProblem) -> Self {
        let n = problem.queries();
        let efficient: Vec<Vec<Item>> = (0..n).map(|j| efficient_items(problem, j)).collect();
        let hull: Vec<Vec<Item>> = efficient.iter().map(|e| upper_hull(e)).collect();
        let mut increments = Vec::new();
        for (query, h) in hull.iter().enumerate() {
            for to in 1..h.len() {
                increments.push(Increment {
                    query,
                    to,
                    dscore: h[to].score - h[to - 1].score,
                    dcost: h[to].cost - h[to - 1].cost,
                });
            }
        }
        increments.sort_by(|a, b| {
            (b.dscore / b.dcost)
                .total_cmp(&(a.dscore / a.dcost))
                .then(a.query.cmp(&b.query))
                .then(a.to.cmp(&b.to))
        });
        Relaxation {
            efficient,
            hull,
            increments,
        }
    }

    /// Solves the relaxation with the queries in `assigned` fixed.
    pub fn evaluate(&self, problem: &AssignmentProblem, assigned: &[Option<usize>]) -> NodeLp {
        let mut value = 0.0;
        let mut spent = 0.0;
        for (j, a) in assigned.iter().enumerate() {
            let (score, cost) = match a {
                Some(c) => (problem.scores[*c][j], problem.costs[*c]),
                None => (self.hull[j][0].score, self.hull[j][0].cost),
            };
            value += score;
            spent += cost;
        }
        let mut left = problem.capacity() - spent;
        if left < 0.0 {
            return NodeLp::Infeasible;
        }

        let mut level = vec![0usize; assigned.len()];
        let mut bound = None;
        let mut fractional = None;
        let mut ratio = 0.0;
        for inc in &self.increments {
            let q = inc.query;
            if assigned[q].is_some() || level[q] + 1 != inc.to {
                continue;
            }
            if bound.is_none() {
                if inc.dcost <= left {
                    left -= inc.dcost;
                    value += inc.dscore;
                    level[q] = inc.to;
                } else {
                    bound = Some(value + inc.dscore * (left / inc.dcost));
                    ratio = inc.dscore / inc.dcost;
                    fractional = Some(Fractional {
                        query: q,
                        lower: self.hull[q][inc.to - 1].class,
                        upper: self.hull[q][inc.to].class,
                    });
                }
            } else if Some(q) != fractional.map(|f| f.query) && inc.dcost <= left {
                // past the LP optimum: only the rounded solution keeps filling
                left -= inc.dcost;
                level[q] = inc.to;
            }
        }

        let rounded: Vec<usize> = assigned
            .iter()
            .enumerate()
            .map(|(j, a)| a.unwrap_or(self.hull[j][level[j]].class))
            .collect();
        let rounded_value = problem.objective_of(&rounded);
        NodeLp::Bounded(NodeSolution {
            bound: bound.unwrap_or(value).max(rounded_value),
            fractional,
            rounded,
            rounded_value,
            ratio,
        })
    }
}
