//! Problem-definition types and portfolio accounting.
//!
//! A [`Portfolio`] maps every query to exactly one classifier. Its accuracy is
//! the fraction of queries whose assigned classifier predicted the true label
//! and its cost is the sum of the per-call costs of the assigned classifiers.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack admitted when comparing a summed cost against a budget.
///
/// Costs are sums of up to ~10^5 reals; compensated summation keeps the drift
/// far below this, so anything beyond it is a genuine overrun.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// `cost <= budget` up to [`BUDGET_TOLERANCE`] (relative for large budgets).
pub fn within_budget(cost: f64, budget: f64) -> bool {
    cost <= budget + BUDGET_TOLERANCE * budget.abs().max(1.0)
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub id: String,
    pub embedding: Vec<f64>,
    pub label: usize,
}

impl LabeledPoint {
    pub fn new(id: impl Into<String>, embedding: Vec<f64>, label: usize) -> Self {
        LabeledPoint {
            id: id.into(),
            embedding,
            label,
        }
    }
}

/// Checks the dataset-level invariants: shared dimension, finite
/// coordinates and labels below `classes`.
pub fn validate_points(points: &[LabeledPoint], classes: usize) -> Result<()> {
    let Some(first) = points.first() else {
        return Ok(());
    };
    let dim = first.embedding.len();
    for p in points {
        if p.embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.embedding.len(),
            });
        }
        if p.embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataIntegrity(format!(
                "point {} has a non-finite coordinate",
                p.id
            )));
        }
        if p.label >= classes {
            return Err(Error::ClassOutOfRange {
                index: p.label,
                classes,
            });
        }
    }
    Ok(())
}

/// A classifier in the pool. Indices are 0-based and dense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierProfile {
    pub index: usize,
    pub name: String,
    /// Normalized cost of one inference call (fraction of the most expensive
    /// classifier's cost).
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_hint: Option<f64>,
}

impl ClassifierProfile {
    pub fn new(index: usize, name: impl Into<String>, cost: f64) -> Result<Self> {
        if !(cost.is_finite() && cost > 0.0) {
            return Err(Error::InvalidInput(format!(
                "classifier cost must be positive and finite, got {cost}"
            )));
        }
        Ok(ClassifierProfile {
            index,
            name: name.into(),
            cost,
            lipschitz_hint: None,
        })
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }
}

/// Checks that profile indices are exactly `0..M` in order.
pub fn validate_roster(profiles: &[ClassifierProfile]) -> Result<()> {
    if profiles.is_empty() {
        return Err(Error::InvalidInput("empty classifier roster".into()));
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.index != i {
            return Err(Error::InvalidInput(format!(
                "classifier {} has index {}, expected {i}",
                p.name, p.index
            )));
        }
        if !(p.cost.is_finite() && p.cost > 0.0) {
            return Err(Error::InvalidInput(format!(
                "classifier {} has non-positive cost {}",
                p.name, p.cost
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    /// Query id to classifier index, in query order.
    pub assignment: IndexMap<String, usize>,
    pub realized_cost: f64,
    pub objective: f64,
}

impl Portfolio {
    /// Builds a portfolio from parallel query ids and classifier choices,
    /// computing the realized cost from `profiles`.
    pub fn from_choices(
        ids: &[String],
        choices: &[usize],
        profiles: &[ClassifierProfile],
        objective: f64,
    ) -> Result<Self> {
        if ids.len() != choices.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: choices.len(),
            });
        }
        let mut assignment = IndexMap::with_capacity(ids.len());
        for (id, &c) in ids.iter().zip(choices) {
            if assignment.insert(id.clone(), c).is_some() {
                return Err(Error::DataIntegrity(format!("duplicate query id {id}")));
            }
        }
        let mut p = Portfolio {
            assignment,
            realized_cost: 0.0,
            objective,
        };
        p.realized_cost = cost(&p, profiles)?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Fraction of queries routed to each classifier. Sums to 1 for a
    /// non-empty portfolio.
    pub fn usage(&self, classifiers: usize) -> Vec<f64> {
        let mut counts = vec![0usize; classifiers];
        for &c in self.assignment.values() {
            if c < classifiers {
                counts[c] += 1;
            }
        }
        let n = self.assignment.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Fraction of assigned queries whose prediction matches the truth.
pub fn accuracy(
    portfolio: &Portfolio,
    predictions: &HashMap<String, usize>,
    truth: &HashMap<String, usize>,
) -> Result<f64> {
    if portfolio.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let mut correct = 0usize;
    for id in portfolio.assignment.keys() {
        let pred = predictions
            .get(id)
            .ok_or_else(|| Error::DataIntegrity(format!("missing prediction for query {id}")))?;
        let label = truth
            .get(id)
            .ok_or_else(|| Error::DataIntegrity(format!("missing truth label for query {id}")))?;
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / portfolio.len() as f64)
}

/// Total inference cost of the portfolio.
pub fn cost(portfolio: &Portfolio, profiles: &[ClassifierProfile]) -> Result<f64> {
    let mut terms = Vec::with_capacity(portfolio.len());
    for &c in portfolio.assignment.values() {
        let p = profiles.get(c).ok_or(Error::UnknownClassifier(c))?;
        terms.push(p.cost);
    }
    Ok(compensated_sum(terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub raw_budget: f64,
    pub feature_extraction_cost: f64,
    pub effective_budget: f64,
}

impl BudgetSpec {
    pub fn new(raw_budget: f64, feature_extraction_cost: f64) -> Result<Self> {
        if !(raw_budget.is_finite() && raw_budget > 0.0) {
            return Err(Error::InvalidInput(format!(
                "raw budget must be positive and finite, got {raw_budget}"
            )));
        }
        if !(feature_extraction_cost.is_finite() && feature_extraction_cost >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "feature extraction cost must be non-negative, got {feature_extraction_cost}"
            )));
        }
        Ok(BudgetSpec {
            raw_budget,
            feature_extraction_cost,
            effective_budget: raw_budget - feature_extraction_cost,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub cost: Option<f64>,
    pub warning: Option<String>,
}

/// Whether the portfolio's cost fits the effective budget.
pub fn check_feasible(
    portfolio: &Portfolio,
    profiles: &[ClassifierProfile],
    budget: &BudgetSpec,
) -> Feasibility {
    let total = match cost(portfolio, profiles) {
        Ok(c) => c,
        Err(e) => {
            return Feasibility {
                feasible: false,
                cost: None,
                warning: Some(e.to_string()),
            }
        }
    };
    if budget.effective_budget < 0.0 {
        return Feasibility {
            feasible: false,
            cost: Some(total),
            warning: Some(format!(
                "effective budget is negative: raw {} minus feature extraction {}",
                budget.raw_budget, budget.feature_extraction_cost
            )),
        };
    }
    Feasibility {
        feasible: within_budget(total, budget.effective_budget),
        cost: Some(total),
        warning: None,
    }
}
