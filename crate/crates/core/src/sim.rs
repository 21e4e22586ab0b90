//! Random value dependency graphs and model-comparison sweeps.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{
    self, Model, PlanError, PlanProblem, PrecedenceEdge, RequirementSet, SolverLimits,
};
use crate::vdg::{propagate, Quality, ValueDependencyGraph};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("need at least two requirements, got {0}")]
    TooSmall(usize),
    #[error("{what} must lie in [0, 1], got {value}")]
    Level { what: &'static str, value: f64 },
    #[error("budget percentage {0} outside [0, 100]")]
    BudgetPct(f64),
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("timing sizes must be at least 1")]
    BadSize,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Costs and values of the 27-requirement case-study project.
pub fn case_study() -> RequirementSet {
    const COST: [f64; 27] = [
        5.0, 20.0, 0.0, 10.0, 1.0, 20.0, 6.0, 5.0, 16.0, 10.0, 4.0, 3.0, 5.0, 7.0, 15.0, 13.0,
        14.0, 3.0, 10.0, 7.0, 12.0, 15.0, 8.0, 2.0, 10.0, 0.0, 1.0,
    ];
    const VALUE: [f64; 27] = [
        10.0, 20.0, 4.0, 17.0, 3.0, 20.0, 15.0, 9.0, 20.0, 16.0, 20.0, 10.0, 6.0, 8.0, 8.0, 10.0,
        6.0, 10.0, 20.0, 20.0, 15.0, 20.0, 20.0, 5.0, 0.0, 0.0, 0.0,
    ];
    RequirementSet::unnamed(COST.to_vec(), VALUE.to_vec()).expect("static data is valid")
}

fn check_level(what: &'static str, value: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SimError::Level { what, value })
    }
}

/// Exactly `round(vdl n(n-1))` edges on distinct ordered pairs, of which
/// `round(nvdl k)` are negative. Strengths are uniform on `(0, 1]`.
pub fn random_vdg(
    n: usize,
    vdl: f64,
    nvdl: f64,
    seed: u64,
) -> Result<ValueDependencyGraph, SimError> {
    if n < 2 {
        return Err(SimError::TooSmall(n));
    }
    check_level("vdl", vdl)?;
    check_level("nvdl", nvdl)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = n * (n - 1);
    let k = ((vdl * pairs as f64).round() as usize).min(pairs);
    let m = ((nvdl * k as f64).round() as usize).min(k);

    let mut chosen = index::sample(&mut rng, pairs, k).into_vec();
    chosen.sort_unstable();
    let negative: BTreeSet<usize> = index::sample(&mut rng, k, m).into_iter().collect();

    let mut g = ValueDependencyGraph::new(n);
    for (e, &p) in chosen.iter().enumerate() {
        let from = p / (n - 1);
        let mut to = p % (n - 1);
        if to >= from {
            to += 1;
        }
        let quality = if negative.contains(&e) {
            Quality::Negative
        } else {
            Quality::Positive
        };
        let strength = 1.0 - rng.random::<f64>();
        g.add_edge(from, to, quality, strength)
            .expect("distinct off-diagonal pairs");
    }
    Ok(g)
}

/// Seed for one generated graph, derived from the master seed and the
/// graph's coordinates so that workers can run in any order.
pub fn derived_seed(master: u64, vdl_idx: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((vdl_idx as u64) << 32) | trial as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset: RequirementSet,
    pub vdl_grid: Vec<f64>,
    pub budget_grid: Vec<f64>,
    pub nvdl: f64,
    pub trials: usize,
    pub seed: u64,
    /// Per solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
}

impl SweepConfig {
    pub fn new(dataset: RequirementSet, vdl_grid: Vec<f64>, budget_grid: Vec<f64>) -> Self {
        SweepConfig {
            dataset,
            vdl_grid,
            budget_grid,
            nvdl: 0.0,
            trials: 20,
            seed: 0,
            time_limit_s: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.dataset.len() < 2 {
            return Err(SimError::TooSmall(self.dataset.len()));
        }
        if self.vdl_grid.is_empty() {
            return Err(SimError::EmptyGrid("vdl"));
        }
        if self.budget_grid.is_empty() {
            return Err(SimError::EmptyGrid("budget"));
        }
        if self.trials == 0 {
            return Err(SimError::NoTrials);
        }
        for &v in &self.vdl_grid {
            check_level("vdl", v)?;
        }
        check_level("nvdl", self.nvdl)?;
        if let Some(&b) = self
            .budget_grid
            .iter()
            .find(|b| !(0.0..=100.0).contains(*b))
        {
            return Err(SimError::BudgetPct(b));
        }
        Ok(())
    }

    pub fn budget(&self, pct: f64) -> f64 {
        pct * self.dataset.total_cost() / 100.0
    }

    fn limits(&self) -> SolverLimits {
        SolverLimits {
            max_nodes: None,
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
        }
    }
}

/// One model solved on one generated graph at one budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub vdl_idx: usize,
    pub budget_idx: usize,
    pub trial: usize,
    pub model: Model,
    pub ov: f64,
    pub av: f64,
    pub feasible: bool,
    pub proven: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub vdl: f64,
    pub budget_pct: f64,
    pub model: Model,
    pub ov_pct: f64,
    pub av_pct: f64,
    /// Share of trials whose solution was infeasible or not proven optimal.
    pub infeasible_rate: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub nvdl: f64,
    pub cells: Vec<GridCell>,
    pub records: Vec<TrialRecord>,
}

impl SweepGrid {
    /// Cells with at least one infeasible or unproven trial.
    pub fn incomplete(&self) -> impl Iterator<Item = &GridCell> {
        self.cells.iter().filter(|c| c.infeasible_rate > 0.0)
    }
}

/// Runs every `(vdl, budget)` cell not listed in `skip` (by grid indices).
///
/// The graph for `(vdl, trial)` is shared by all budgets, so along a row the
/// only thing that changes is the budget.
pub fn sweep_cells(
    config: &SweepConfig,
    models: &[Model],
    skip: &BTreeSet<(usize, usize)>,
) -> Result<SweepGrid, SimError> {
    config.validate()?;
    let n = config.dataset.len();
    let limits = config.limits();
    let work: Vec<(usize, usize)> = (0..config.vdl_grid.len())
        .filter(|&v| (0..config.budget_grid.len()).any(|b| !skip.contains(&(v, b))))
        .flat_map(|v| (0..config.trials).map(move |t| (v, t)))
        .collect();

    let per_graph: Vec<Vec<TrialRecord>> = work
        .par_iter()
        .map(|&(v, trial)| {
            let seed = derived_seed(config.seed, v, trial);
            let g = random_vdg(n, config.vdl_grid[v], config.nvdl, seed)?;
            let infl = propagate(&g);
            let edges = PrecedenceEdge::from_graph(&g);
            let mut out = Vec::new();
            for (b, &pct) in config.budget_grid.iter().enumerate() {
                if skip.contains(&(v, b)) {
                    continue;
                }
                for &model in models {
                    let p = PlanProblem::new(
                        config.dataset.clone(),
                        infl.clone(),
                        config.budget(pct),
                        model,
                    )?
                    .with_pc_edges(edges.clone())?
                    .with_limits(limits);
                    let s = plan::solve(&p)?;
                    out.push(TrialRecord {
                        vdl_idx: v,
                        budget_idx: b,
                        trial,
                        model,
                        ov: s.ov,
                        av: s.av,
                        feasible: s.feasible,
                        proven: s.stats.proven,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_, SimError>>()?;

    let mut records: Vec<TrialRecord> = per_graph.into_iter().flatten().collect();
    records.sort_by_key(|r| (r.vdl_idx, r.budget_idx, r.model, r.trial));
    let cells = aggregate(config, models, &records);
    Ok(SweepGrid {
        nvdl: config.nvdl,
        cells,
        records,
    })
}

pub fn sweep(config: &SweepConfig, models: &[Model]) -> Result<SweepGrid, SimError> {
    sweep_cells(config, models, &BTreeSet::new())
}

fn aggregate(config: &SweepConfig, models: &[Model], records: &[TrialRecord]) -> Vec<GridCell> {
    let total = config.dataset.total_value();
    let pct = |x: f64| if total > 0.0 { 100.0 * x / total } else { 0.0 };
    let mut cells = Vec::new();
    for (v, &vdl) in config.vdl_grid.iter().enumerate() {
        for (b, &budget_pct) in config.budget_grid.iter().enumerate() {
            for &model in models {
                let rs: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.vdl_idx == v && r.budget_idx == b && r.model == model)
                    .collect();
                if rs.is_empty() {
                    continue;
                }
                let k = rs.len() as f64;
                cells.push(GridCell {
                    vdl,
                    budget_pct,
                    model,
                    ov_pct: rs.iter().map(|r| pct(r.ov)).sum::<f64>() / k,
                    av_pct: rs.iter().map(|r| pct(r.av)).sum::<f64>() / k,
                    infeasible_rate: rs.iter().filter(|r| !(r.feasible && r.proven)).count() as f64
                        / k,
                    trials: rs.len(),
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub vdl: f64,
    pub nvdl: f64,
    pub budget_pct: f64,
    /// Per solve.
    pub time_limit_s: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            sizes: vec![1, 10, 50, 100, 200, 500],
            seed: 0,
            vdl: 0.05,
            nvdl: 0.5,
            budget_pct: 50.0,
            time_limit_s: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub size: usize,
    pub model: Model,
    pub seconds: f64,
    pub nodes: u64,
    pub proven: bool,
    pub ov: f64,
    pub av: f64,
    pub x: Vec<bool>,
}

/// Uniform costs and values on `(0, 20]` and a random graph at the
/// configured levels (edgeless when `size` is 1).
pub fn random_instance(
    size: usize,
    config: &TimingConfig,
) -> Result<(RequirementSet, ValueDependencyGraph), SimError> {
    if size == 0 {
        return Err(SimError::BadSize);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed, size, 0));
    let mut draw = |_| 20.0 * (1.0 - rng.random::<f64>());
    let cost: Vec<f64> = (0..size).map(&mut draw).collect();
    let value: Vec<f64> = (0..size).map(&mut draw).collect();
    let g = if size < 2 {
        ValueDependencyGraph::new(size)
    } else {
        random_vdg(
            size,
            config.vdl,
            config.nvdl,
            derived_seed(config.seed, size, 1),
        )?
    };
    Ok((RequirementSet::unnamed(cost, value)?, g))
}

/// Solves every model on one random instance per size. Runs are sequential
/// so wall times are not skewed by each other.
pub fn timing_run(config: &TimingConfig, models: &[Model]) -> Result<Vec<TimingRecord>, SimError> {
    check_level("vdl", config.vdl)?;
    check_level("nvdl", config.nvdl)?;
    if !(0.0..=100.0).contains(&config.budget_pct) {
        return Err(SimError::BudgetPct(config.budget_pct));
    }
    let limits = SolverLimits::with_time_limit(Duration::from_secs_f64(config.time_limit_s));
    let mut out = Vec::new();
    for &size in &config.sizes {
        let (reqs, g) = random_instance(size, config)?;
        let infl = propagate(&g);
        let budget = config.budget_pct * reqs.total_cost() / 100.0;
        let edges = PrecedenceEdge::from_graph(&g);
        for &model in models {
            let p = PlanProblem::new(reqs.clone(), infl.clone(), budget, model)?
                .with_pc_edges(edges.clone())?
                .with_limits(limits);
            let s = plan::solve(&p)?;
            out.push(TimingRecord {
                size,
                model,
                seconds: s.stats.wall_time.as_secs_f64(),
                nodes: s.stats.nodes,
                proven: s.stats.proven,
                ov: s.ov,
                av: s.av,
                x: s.x,
            });
        }
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            r[k] = avg;
        }
        start = end;
    }
    r
}
