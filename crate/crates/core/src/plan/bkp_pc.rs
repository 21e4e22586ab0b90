use crate::vdg::Quality;

use super::{
    density_order, fractional_bound, Model, PlanError, PlanProblem, PlanSolution, PrecedenceEdge,
    SearchBudget, SolverLimits, BUDGET_EPS,
};

/// Knapsack with hard precedence/exclusion constraints, by depth-first
/// branch and bound with unit propagation over the implications of each
/// edge.
pub fn solve_bkp_pc(problem: &PlanProblem) -> Result<PlanSolution, PlanError> {
    problem.expect_model(Model::BkpPc)?;
    let (x, stats) = constrained_knapsack(
        problem.reqs.costs(),
        problem.reqs.values(),
        problem.budget,
        &problem.pc_edges,
        problem.limits,
        "branch-and-bound",
    );
    Ok(PlanSolution::evaluate(problem, x, stats))
}

type Implications = Vec<Vec<(usize, bool)>>;

fn implications(n: usize, edges: &[PrecedenceEdge]) -> (Implications, Implications) {
    let mut on_true = vec![Vec::new(); n];
    let mut on_false = vec![Vec::new(); n];
    for e in edges {
        match e.quality {
            // x_from <= x_to
            Quality::Positive => {
                on_true[e.from].push((e.to, true));
                on_false[e.to].push((e.from, false));
            }
            // x_from + x_to <= 1
            Quality::Negative => {
                on_true[e.from].push((e.to, false));
                on_true[e.to].push((e.from, false));
            }
            Quality::Nonspecified => {}
        }
    }
    (on_true, on_false)
}

struct Search<'a> {
    cost: &'a [f64],
    value: &'a [f64],
    capacity: f64,
    order: Vec<usize>,
    on_true: Implications,
    on_false: Implications,
    assign: Vec<Option<bool>>,
    trail: Vec<usize>,
    queue: Vec<(usize, bool)>,
    used: f64,
    gained: f64,
    best: f64,
    best_x: Vec<bool>,
    budget: SearchBudget,
}

impl Search<'_> {
    /// Fixes `var` and everything it implies. Returns false on a conflict;
    /// the caller undoes partial work either way.
    fn set(&mut self, var: usize, val: bool) -> bool {
        self.queue.clear();
        self.queue.push((var, val));
        while let Some((v, b)) = self.queue.pop() {
            match self.assign[v] {
                Some(cur) if cur == b => continue,
                Some(_) => return false,
                None => {}
            }
            self.assign[v] = Some(b);
            self.trail.push(v);
            if b {
                self.used += self.cost[v];
                self.gained += self.value[v];
                if self.used > self.capacity + BUDGET_EPS {
                    return false;
                }
            }
            let implied = if b {
                &self.on_true[v]
            } else {
                &self.on_false[v]
            };
            self.queue.extend_from_slice(implied);
        }
        true
    }

    fn undo(&mut self, trail_len: usize, used: f64, gained: f64) {
        for v in self.trail.drain(trail_len..) {
            self.assign[v] = None;
        }
        self.used = used;
        self.gained = gained;
    }

    fn bound(&self, from: usize) -> f64 {
        let room = self.capacity + BUDGET_EPS - self.used;
        let free = self.order[from..]
            .iter()
            .filter(|&&k| self.assign[k].is_none())
            .map(|&k| (self.cost[k], self.value[k]));
        self.gained + fractional_bound(free, room)
    }

    fn run(&mut self, from: usize) {
        if !self.budget.tick() {
            return;
        }
        // Free variables at 0 never violate a propagated state.
        if self.gained > self.best {
            self.best = self.gained;
            self.best_x = self.assign.iter().map(|a| a.unwrap_or(false)).collect();
        }
        let Some(idx) = (from..self.order.len()).find(|&p| self.assign[self.order[p]].is_none())
        else {
            return;
        };
        if self.bound(idx) <= self.best + 1e-9 {
            return;
        }
        let var = self.order[idx];
        for val in [true, false] {
            let (mark, used, gained) = (self.trail.len(), self.used, self.gained);
            if self.set(var, val) {
                self.run(idx + 1);
            }
            self.undo(mark, used, gained);
            if self.budget.exhausted {
                return;
            }
        }
    }
}

/// Maximizes `sum value` subject to the budget and the edge constraints.
pub(crate) fn constrained_knapsack(
    cost: &[f64],
    value: &[f64],
    capacity: f64,
    edges: &[PrecedenceEdge],
    limits: SolverLimits,
    method: &str,
) -> (Vec<bool>, super::SolverStats) {
    let n = cost.len();
    let (on_true, on_false) = implications(n, edges);
    let mut search = Search {
        cost,
        value,
        capacity,
        order: density_order(cost, value),
        on_true,
        on_false,
        assign: vec![None; n],
        trail: Vec::with_capacity(n),
        queue: Vec::new(),
        used: 0.0,
        gained: 0.0,
        best: f64::NEG_INFINITY,
        best_x: vec![false; n],
        budget: SearchBudget::new(limits),
    };

    // Requirements that imply their own exclusion can never be selected.
    for v in 0..n {
        if search.assign[v].is_some() {
            continue;
        }
        let mark = search.trail.len();
        let ok = search.set(v, true);
        search.undo(mark, 0.0, 0.0);
        if !ok {
            let consistent = search.set(v, false);
            debug_assert!(consistent);
        }
    }
    search.used = 0.0;
    search.gained = 0.0;

    search.run(0);
    let stats = search.budget.stats(method);
    (search.best_x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testing::{brute_force, random_problem};
    use crate::plan::{accumulated_value, RequirementSet};
    use crate::vdg::InfluenceMatrix;

    fn problem(
        cost: Vec<f64>,
        value: Vec<f64>,
        budget: f64,
        edges: &[(usize, usize, Quality)],
    ) -> PlanProblem {
        let n = cost.len();
        let reqs = RequirementSet::unnamed(cost, value).unwrap();
        PlanProblem::new(reqs, InfluenceMatrix::zeros(n), budget, Model::BkpPc)
            .unwrap()
            .with_pc_edges(
                edges
                    .iter()
                    .map(|&(from, to, quality)| PrecedenceEdge { from, to, quality })
                    .collect(),
            )
            .unwrap()
    }

    #[test]
    fn positive_edge_blocks_unaffordable_dependency() {
        // r0 needs r1, but only r0 fits.
        let p = problem(
            vec![3.0, 5.0, 2.0],
            vec![10.0, 1.0, 4.0],
            5.0,
            &[(0, 1, Quality::Positive)],
        );
        let s = solve_bkp_pc(&p).unwrap();
        assert!(!s.x[0]);
        assert_eq!(s.av, 4.0);
        assert_eq!(s.x, vec![false, false, true]);
    }

    #[test]
    fn negative_edge_keeps_the_better_one() {
        let p = problem(
            vec![1.0, 1.0],
            vec![5.0, 3.0],
            10.0,
            &[(0, 1, Quality::Negative)],
        );
        let s = solve_bkp_pc(&p).unwrap();
        assert_eq!(s.x, vec![true, false]);
        assert!(s.feasible);
    }

    #[test]
    fn self_conflicting_requirement_is_dropped() {
        // r0 both requires and conflicts with r1.
        let p = problem(
            vec![1.0, 1.0],
            vec![9.0, 1.0],
            2.0,
            &[(0, 1, Quality::Positive), (0, 1, Quality::Negative)],
        );
        let s = solve_bkp_pc(&p).unwrap();
        assert_eq!(s.x, vec![false, true]);
    }

    #[test]
    fn empty_selection_when_optimal() {
        let p = problem(
            vec![1.0, 1.0],
            vec![5.0, 0.0],
            1.0,
            &[(0, 1, Quality::Positive)],
        );
        let s = solve_bkp_pc(&p).unwrap();
        assert_eq!(s.av, 0.0);
        assert!(s.stats.proven);
    }

    #[test]
    fn matches_enumeration() {
        for seed in 0..120 {
            let n = 1 + (seed as usize % 13);
            let (p, _) = random_problem(seed, n, Model::BkpPc, seed % 2 == 0);
            let s = solve_bkp_pc(&p).unwrap();
            let best = brute_force(
                n,
                |x| p.fits_budget(x) && p.pc_edges.iter().all(|e| e.satisfied(x)),
                |x| accumulated_value(&p.reqs, x),
            );
            assert!(s.feasible, "seed {seed}");
            assert!(
                (s.av - best).abs() < 1e-9,
                "seed {seed}: {} vs {best}",
                s.av
            );
        }
    }

    #[test]
    fn node_limit_returns_unproven_incumbent() {
        let (mut p, _) = random_problem(5, 14, Model::BkpPc, false);
        p.limits = SolverLimits {
            max_nodes: Some(2),
            time_limit: None,
        };
        let s = solve_bkp_pc(&p).unwrap();
        assert!(s.feasible);
        assert!(!s.stats.proven);
    }
}
