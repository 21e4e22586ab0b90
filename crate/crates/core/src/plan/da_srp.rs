use super::bkp::knapsack;
use super::{
    density_order, fractional_bound, overall_value, Model, PlanError, PlanProblem, PlanSolution,
    SearchBudget, SolverLimits, BUDGET_EPS,
};

/// Exact DA-SRP by depth-first branch and bound over `x`.
///
/// Every fixed variable raises the penalty lower bounds of the requirements
/// it influences. A node is bounded by the fixed selection at those
/// penalties plus a fractional knapsack over the free requirements at their
/// reduced values, which can only shrink further down the tree.
pub fn solve_da_srp(problem: &PlanProblem) -> Result<PlanSolution, PlanError> {
    problem.expect_model(Model::DaSrp)?;
    let n = problem.n();
    let cost = problem.reqs.costs();
    let value = problem.reqs.values();

    let mut pos_in = vec![Vec::new(); n];
    let mut neg_in = vec![Vec::new(); n];
    for i in 0..n {
        for (j, &iij) in problem.infl.row(i).iter().enumerate() {
            if i == j {
                continue;
            }
            if iij > 0.0 {
                pos_in[j].push((i, iij));
            } else if iij < 0.0 {
                neg_in[j].push((i, -iij));
            }
        }
    }

    let warm_limits = SolverLimits {
        max_nodes: Some(1_000_000),
        time_limit: problem.limits.time_limit.map(|t| t / 10),
    };
    let (warm, _) = knapsack(cost, value, problem.budget, warm_limits);
    let warm_ov = overall_value(&problem.reqs, &problem.infl, &warm);
    let (best, best_x) = if warm_ov > 0.0 {
        (warm_ov, warm)
    } else {
        (0.0, vec![false; n])
    };

    let mut search = Search {
        cost,
        value,
        capacity: problem.budget + BUDGET_EPS,
        order: density_order(cost, value),
        pos_in,
        neg_in,
        x: vec![false; n],
        plb: vec![0.0; n],
        trail: Vec::new(),
        used: 0.0,
        best,
        best_x,
        scratch: Vec::with_capacity(n),
        budget: SearchBudget::new(problem.limits),
    };
    search.run(0);
    let stats = search.budget.stats("branch-and-bound");
    Ok(PlanSolution::evaluate(problem, search.best_x, stats))
}

struct Search<'a> {
    cost: &'a [f64],
    value: &'a [f64],
    capacity: f64,
    order: Vec<usize>,
    /// Column `j`: rows `i` with `I_ij > 0`, penalized when `x_j = 0`.
    pos_in: Vec<Vec<(usize, f64)>>,
    /// Column `j`: rows `i` with `I_ij < 0`, penalized when `x_j = 1`.
    neg_in: Vec<Vec<(usize, f64)>>,
    x: Vec<bool>,
    plb: Vec<f64>,
    trail: Vec<(usize, f64)>,
    used: f64,
    best: f64,
    best_x: Vec<bool>,
    scratch: Vec<(f64, f64)>,
    budget: SearchBudget,
}

impl Search<'_> {
    fn fix(&mut self, j: usize, val: bool) {
        self.x[j] = val;
        if val {
            self.used += self.cost[j];
        }
        let raised = if val {
            &self.neg_in[j]
        } else {
            &self.pos_in[j]
        };
        for &(i, s) in raised {
            if s > self.plb[i] {
                self.trail.push((i, self.plb[i]));
                self.plb[i] = s;
            }
        }
    }

    fn unfix(&mut self, j: usize, mark: usize, used: f64) {
        while self.trail.len() > mark {
            let (i, old) = self.trail.pop().unwrap();
            self.plb[i] = old;
        }
        self.x[j] = false;
        self.used = used;
    }

    fn reduced(&self, i: usize) -> f64 {
        self.value[i] - self.plb[i] * self.value[i]
    }

    fn bound(&mut self, depth: usize) -> f64 {
        let fixed: f64 = self.order[..depth]
            .iter()
            .filter(|&&i| self.x[i])
            .map(|&i| self.reduced(i))
            .sum();
        let loose: f64 = self.order[depth..].iter().map(|&i| self.reduced(i)).sum();
        if fixed + loose <= self.best + 1e-9 {
            return fixed + loose;
        }
        let mut items = std::mem::take(&mut self.scratch);
        items.clear();
        items.extend(
            self.order[depth..]
                .iter()
                .map(|&i| (self.cost[i], self.reduced(i)))
                .filter(|&(_, r)| r > 0.0),
        );
        let ratio = |(c, r): (f64, f64)| if c == 0.0 { f64::INFINITY } else { r / c };
        items.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)));
        let b = fixed + fractional_bound(items.iter().copied(), self.capacity - self.used);
        self.scratch = items;
        b
    }

    fn run(&mut self, depth: usize) {
        if !self.budget.tick() {
            return;
        }
        if depth == self.order.len() {
            // All variables fixed: the lower bounds are the exact penalties.
            let ov: f64 = (0..self.x.len())
                .filter(|&i| self.x[i])
                .map(|i| self.reduced(i))
                .fold(0.0, |a, b| a + b);
            if ov > self.best {
                self.best = ov;
                self.best_x.clone_from(&self.x);
            }
            return;
        }
        if self.bound(depth) <= self.best + 1e-9 {
            return;
        }
        let var = self.order[depth];
        for val in [true, false] {
            if val && self.used + self.cost[var] > self.capacity {
                continue;
            }
            let (mark, used) = (self.trail.len(), self.used);
            self.fix(var, val);
            self.run(depth + 1);
            self.unfix(var, mark, used);
            if self.budget.exhausted {
                return;
            }
        }
    }
}
