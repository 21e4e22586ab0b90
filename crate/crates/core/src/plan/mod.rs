//! Release planning models.
//!
//! * BKP: plain 0-1 knapsack on estimated values.
//! * BKP-PC: knapsack where every explicit dependency is a hard precedence
//!   (`+`) or exclusion (`-`) constraint.
//! * DA-SRP: maximizes the overall value, where each selected requirement
//!   loses the fraction of its value given by its penalty.
//!
//! All three are solved exactly by in-crate solvers; a node or time budget
//! turns them into anytime searches that report whether optimality was proven.

mod bkp;
mod bkp_pc;
mod da_srp;
pub mod milp;
mod value;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vdg::{InfluenceMatrix, Quality, ValueDependencyGraph};

pub use bkp::solve_bkp;
pub use bkp_pc::solve_bkp_pc;
pub use da_srp::solve_da_srp;
pub use milp::linearize_da_srp;
pub use value::{accumulated_value, expected_value, overall_value, penalties, penalty};

/// Slack allowed when comparing a selection's cost to the budget.
pub const BUDGET_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("requirement set has {costs} costs but {values} values")]
    LengthMismatch { costs: usize, values: usize },
    #[error("requirement {index}: {what} must be finite and non-negative, got {value}")]
    InvalidRequirement {
        index: usize,
        what: &'static str,
        value: f64,
    },
    #[error("influence matrix is {got}x{got} but there are {expected} requirements")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("budget must be finite and non-negative, got {0}")]
    InvalidBudget(f64),
    #[error("problem is set up for {actual} but {requested} was requested")]
    WrongModel { requested: Model, actual: Model },
    #[error("precedence edge ({from}, {to}) is invalid for {n} requirements")]
    InvalidEdge { from: usize, to: usize, n: usize },
    #[error("selection has {got} entries, expected {expected}")]
    SelectionLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementSet {
    ids: Vec<String>,
    cost: Vec<f64>,
    value: Vec<f64>,
}

impl RequirementSet {
    pub fn new(ids: Vec<String>, cost: Vec<f64>, value: Vec<f64>) -> Result<Self, PlanError> {
        if cost.len() != value.len() || ids.len() != cost.len() {
            return Err(PlanError::LengthMismatch {
                costs: cost.len(),
                values: value.len(),
            });
        }
        for (what, xs) in [("cost", &cost), ("value", &value)] {
            if let Some((index, &v)) = xs
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
            {
                return Err(PlanError::InvalidRequirement {
                    index,
                    what,
                    value: v,
                });
            }
        }
        Ok(RequirementSet { ids, cost, value })
    }

    /// Requirements named `r1..rn`.
    pub fn unnamed(cost: Vec<f64>, value: Vec<f64>) -> Result<Self, PlanError> {
        let ids = (1..=cost.len()).map(|i| format!("r{i}")).collect();
        Self::new(ids, cost, value)
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.iter().fold(0.0, |a, b| a + b)
    }

    pub fn total_value(&self) -> f64 {
        self.value.iter().fold(0.0, |a, b| a + b)
    }

    pub fn selection_cost(&self, x: &[bool]) -> f64 {
        self.cost
            .iter()
            .zip(x)
            .filter(|(_, &s)| s)
            .map(|(c, _)| c)
            .fold(0.0, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "bkp")]
    Bkp,
    #[serde(rename = "bkp-pc")]
    BkpPc,
    #[serde(rename = "da-srp")]
    DaSrp,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Bkp, Model::BkpPc, Model::DaSrp];

    pub fn name(self) -> &'static str {
        match self {
            Model::Bkp => "bkp",
            Model::BkpPc => "bkp-pc",
            Model::DaSrp => "da-srp",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bkp" => Ok(Model::Bkp),
            "bkp-pc" => Ok(Model::BkpPc),
            "da-srp" => Ok(Model::DaSrp),
            other => Err(format!(
                "unknown model '{other}' (expected bkp, bkp-pc or da-srp)"
            )),
        }
    }
}

/// An explicit dependency used as a hard BKP-PC constraint: `x_from <= x_to`
/// when positive, `x_from <= 1 - x_to` when negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecedenceEdge {
    pub from: usize,
    pub to: usize,
    pub quality: Quality,
}

impl PrecedenceEdge {
    pub fn from_graph(g: &ValueDependencyGraph) -> Vec<PrecedenceEdge> {
        g.edges()
            .map(|(from, to, e)| PrecedenceEdge {
                from,
                to,
                quality: e.quality,
            })
            .collect()
    }

    pub fn satisfied(&self, x: &[bool]) -> bool {
        match self.quality {
            Quality::Positive => !x[self.from] || x[self.to],
            Quality::Negative => !x[self.from] || !x[self.to],
            Quality::Nonspecified => true,
        }
    }
}

/// Cooperative search budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverLimits {
    pub max_nodes: Option<u64>,
    pub time_limit: Option<Duration>,
}

impl SolverLimits {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn with_time_limit(time_limit: Duration) -> Self {
        SolverLimits {
            max_nodes: None,
            time_limit: Some(time_limit),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub reqs: RequirementSet,
    pub infl: InfluenceMatrix,
    pub budget: f64,
    pub model: Model,
    /// Only read by BKP-PC.
    pub pc_edges: Vec<PrecedenceEdge>,
    pub limits: SolverLimits,
}

impl PlanProblem {
    pub fn new(
        reqs: RequirementSet,
        infl: InfluenceMatrix,
        budget: f64,
        model: Model,
    ) -> Result<Self, PlanError> {
        let p = PlanProblem {
            reqs,
            infl,
            budget,
            model,
            pc_edges: Vec::new(),
            limits: SolverLimits::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_pc_edges(mut self, edges: Vec<PrecedenceEdge>) -> Result<Self, PlanError> {
        self.pc_edges = edges;
        self.validate()?;
        Ok(self)
    }

    pub fn with_limits(mut self, limits: SolverLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn n(&self) -> usize {
        self.reqs.len()
    }

    fn validate(&self) -> Result<(), PlanError> {
        let n = self.reqs.len();
        if self.infl.n() != n {
            return Err(PlanError::DimensionMismatch {
                expected: n,
                got: self.infl.n(),
            });
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return Err(PlanError::InvalidBudget(self.budget));
        }
        for e in &self.pc_edges {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(PlanError::InvalidEdge {
                    from: e.from,
                    to: e.to,
                    n,
                });
            }
        }
        Ok(())
    }

    fn expect_model(&self, requested: Model) -> Result<(), PlanError> {
        self.validate()?;
        if self.model != requested {
            return Err(PlanError::WrongModel {
                requested,
                actual: self.model,
            });
        }
        Ok(())
    }

    pub fn fits_budget(&self, x: &[bool]) -> bool {
        self.reqs.selection_cost(x) <= self.budget + BUDGET_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub method: String,
    pub nodes: u64,
    /// Whether the returned selection is proven optimal for its model.
    pub proven: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSolution {
    pub x: Vec<bool>,
    pub penalties: Vec<f64>,
    pub ov: f64,
    pub av: f64,
    pub feasible: bool,
    pub stats: SolverStats,
}

impl PlanSolution {
    /// Derives penalties, OV, AV and feasibility from the selection alone.
    pub fn evaluate(problem: &PlanProblem, x: Vec<bool>, stats: SolverStats) -> Self {
        let penalties = penalties(&problem.infl, &x);
        let ov = overall_with(&problem.reqs, &x, &penalties);
        let av = accumulated_value(&problem.reqs, &x);
        let feasible = problem.fits_budget(&x)
            && (problem.model != Model::BkpPc || problem.pc_edges.iter().all(|e| e.satisfied(&x)));
        PlanSolution {
            x,
            penalties,
            ov,
            av,
            feasible,
            stats,
        }
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| i)
    }

    pub fn selected_count(&self) -> usize {
        self.x.iter().filter(|&&s| s).count()
    }

    /// The objective the producing model optimizes.
    pub fn objective(&self, model: Model) -> f64 {
        match model {
            Model::Bkp | Model::BkpPc => self.av,
            Model::DaSrp => self.ov,
        }
    }
}

fn overall_with(reqs: &RequirementSet, x: &[bool], penalties: &[f64]) -> f64 {
    reqs.values()
        .iter()
        .zip(x)
        .zip(penalties)
        .filter(|((_, &s), _)| s)
        .map(|((&v, _), &p)| v - p * v)
        .fold(0.0, |a, b| a + b)
}

/// Dispatches on `problem.model`.
pub fn solve(problem: &PlanProblem) -> Result<PlanSolution, PlanError> {
    match problem.model {
        Model::Bkp => solve_bkp(problem),
        Model::BkpPc => solve_bkp_pc(problem),
        Model::DaSrp => solve_da_srp(problem),
    }
}

/// Node and clock accounting shared by the branch-and-bound searches.
pub(crate) struct SearchBudget {
    limits: SolverLimits,
    start: Instant,
    pub nodes: u64,
    pub exhausted: bool,
}

impl SearchBudget {
    pub fn new(limits: SolverLimits) -> Self {
        SearchBudget {
            limits,
            start: Instant::now(),
            nodes: 0,
            exhausted: false,
        }
    }

    /// Counts a node; returns false once the budget is spent.
    pub fn tick(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        self.nodes += 1;
        if let Some(max) = self.limits.max_nodes {
            if self.nodes > max {
                self.exhausted = true;
            }
        }
        if self.nodes.is_multiple_of(1024) {
            if let Some(t) = self.limits.time_limit {
                if self.start.elapsed() >= t {
                    self.exhausted = true;
                }
            }
        }
        !self.exhausted
    }

    pub fn stats(&self, method: &str) -> SolverStats {
        SolverStats {
            method: method.to_string(),
            nodes: self.nodes,
            proven: !self.exhausted,
            wall_time: self.start.elapsed(),
        }
    }
}

/// Items sorted by value density, zero-cost items first, ties by index.
pub(crate) fn density_order(cost: &[f64], value: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cost.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| {
            if cost[i] == 0.0 {
                f64::INFINITY
            } else {
                value[i] / cost[i]
            }
        };
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Dantzig bound: greedy fractional knapsack over `items` (already in
/// non-increasing density order) with the given capacity.
pub(crate) fn fractional_bound<I>(items: I, capacity: f64) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut room = capacity;
    let mut total = 0.0;
    for (c, v) in items {
        if v <= 0.0 {
            continue;
        }
        if c <= room {
            room -= c;
            total += v;
        } else {
            if c > 0.0 && room > 0.0 {
                total += v * room / c;
            }
            break;
        }
    }
    total
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn requirement_set_validation() {
        assert!(RequirementSet::unnamed(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(matches!(
            RequirementSet::unnamed(vec![-1.0], vec![1.0]),
            Err(PlanError::InvalidRequirement {
                index: 0,
                what: "cost",
                ..
            })
        ));
        assert!(RequirementSet::unnamed(vec![1.0], vec![f64::NAN]).is_err());
        let r = RequirementSet::unnamed(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(r.ids(), ["r1", "r2"]);
        assert_eq!(r.total_cost(), 3.0);
    }

    #[test]
    fn problem_validation() {
        let reqs = RequirementSet::unnamed(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let err = PlanProblem::new(reqs.clone(), InfluenceMatrix::zeros(3), 1.0, Model::Bkp);
        assert_eq!(
            err,
            Err(PlanError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
        let err = PlanProblem::new(reqs.clone(), InfluenceMatrix::zeros(2), -1.0, Model::Bkp);
        assert_eq!(err, Err(PlanError::InvalidBudget(-1.0)));
        let p = PlanProblem::new(reqs, InfluenceMatrix::zeros(2), 1.0, Model::Bkp).unwrap();
        let bad = PrecedenceEdge {
            from: 0,
            to: 0,
            quality: Quality::Positive,
        };
        assert!(p.clone().with_pc_edges(vec![bad]).is_err());
        assert!(matches!(
            solve_da_srp(&p),
            Err(PlanError::WrongModel { .. })
        ));
    }

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
        }
        assert_eq!("DA_SRP".parse::<Model>().unwrap(), Model::DaSrp);
        assert!("knapsack".parse::<Model>().is_err());
    }

    #[test]
    fn fractional_bound_examples() {
        assert_eq!(fractional_bound([(2.0, 4.0), (2.0, 2.0)], 3.0), 5.0);
        assert_eq!(fractional_bound([(0.0, 4.0), (5.0, 5.0)], 0.0), 4.0);
        assert_eq!(fractional_bound(std::iter::empty(), 10.0), 0.0);
    }

    #[test]
    fn density_order_puts_free_items_first() {
        let order = density_order(&[2.0, 0.0, 1.0, 1.0], &[2.0, 0.0, 3.0, 3.0]);
        assert_eq!(order, vec![1, 2, 3, 0]);
    }
}
