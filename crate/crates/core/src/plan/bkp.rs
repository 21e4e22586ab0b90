use super::bkp_pc::constrained_knapsack;
use super::{Model, PlanError, PlanProblem, PlanSolution, SearchBudget, SolverLimits, SolverStats};

/// Largest DP table (items x capacity cells) before falling back to search.
const DP_CELL_LIMIT: usize = 400_000_000;

/// Plain 0-1 knapsack on estimated values. OV is reported for the returned
/// selection but plays no part in choosing it.
pub fn solve_bkp(problem: &PlanProblem) -> Result<PlanSolution, PlanError> {
    problem.expect_model(Model::Bkp)?;
    let (x, stats) = knapsack(
        problem.reqs.costs(),
        problem.reqs.values(),
        problem.budget,
        problem.limits,
    );
    Ok(PlanSolution::evaluate(problem, x, stats))
}

/// DP over integer capacities when every cost is integral and the table is
/// small enough, branch and bound otherwise.
pub(crate) fn knapsack(
    cost: &[f64],
    value: &[f64],
    capacity: f64,
    limits: SolverLimits,
) -> (Vec<bool>, SolverStats) {
    let integral = cost
        .iter()
        .all(|c| c.fract() == 0.0 && *c <= u32::MAX as f64);
    let cap = (capacity + super::BUDGET_EPS).floor();
    if integral && cap <= u32::MAX as f64 {
        let cap = cap as usize;
        if cost.len().saturating_mul(cap + 1) <= DP_CELL_LIMIT {
            return dp(cost, value, cap, limits);
        }
    }
    constrained_knapsack(cost, value, capacity, &[], limits, "branch-and-bound")
}

fn dp(cost: &[f64], value: &[f64], cap: usize, limits: SolverLimits) -> (Vec<bool>, SolverStats) {
    let n = cost.len();
    let width = cap + 1;
    let mut best = vec![0.0f64; width];
    let mut take = vec![0u64; (n * width).div_ceil(64)];
    let budget = SearchBudget::new(limits);
    for i in 0..n {
        let w = cost[i] as usize;
        if w > cap || value[i] <= 0.0 {
            continue;
        }
        for c in (w..=cap).rev() {
            let cand = best[c - w] + value[i];
            if cand > best[c] {
                best[c] = cand;
                let bit = i * width + c;
                take[bit / 64] |= 1 << (bit % 64);
            }
        }
    }
    let mut x = vec![false; n];
    let mut c = cap;
    for i in (0..n).rev() {
        let bit = i * width + c;
        if take[bit / 64] >> (bit % 64) & 1 == 1 {
            x[i] = true;
            c -= cost[i] as usize;
        }
    }
    let mut stats = budget.stats("dp");
    stats.nodes = (n * width) as u64;
    (x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testing::{brute_force, random_problem};
    use crate::plan::{accumulated_value, RequirementSet};
    use crate::vdg::InfluenceMatrix;

    fn problem(cost: Vec<f64>, value: Vec<f64>, budget: f64) -> PlanProblem {
        let n = cost.len();
        let reqs = RequirementSet::unnamed(cost, value).unwrap();
        PlanProblem::new(reqs, InfluenceMatrix::zeros(n), budget, Model::Bkp).unwrap()
    }

    #[test]
    fn small_hand_instance() {
        let p = problem(vec![5.0, 4.0, 3.0], vec![10.0, 7.0, 6.0], 7.0);
        let s = solve_bkp(&p).unwrap();
        assert_eq!(s.x, vec![false, true, true]);
        assert_eq!(s.av, 13.0);
        assert_eq!(s.stats.method, "dp");
    }

    #[test]
    fn zero_cost_items_always_taken() {
        let p = problem(vec![0.0, 2.0, 0.0], vec![4.0, 9.0, 0.0], 0.0);
        let s = solve_bkp(&p).unwrap();
        assert_eq!(s.av, 4.0);
        assert!(s.x[0] && !s.x[1]);
    }

    #[test]
    fn fractional_costs_use_search() {
        let p = problem(vec![1.5, 2.5, 1.0], vec![3.0, 4.0, 1.0], 4.0);
        let s = solve_bkp(&p).unwrap();
        assert_eq!(s.stats.method, "branch-and-bound");
        assert_eq!(s.av, 7.0);
    }

    #[test]
    fn matches_enumeration() {
        for seed in 0..120 {
            let n = 1 + (seed as usize % 16);
            let (p, _) = random_problem(1000 + seed, n, Model::Bkp, seed % 2 == 0);
            let s = solve_bkp(&p).unwrap();
            let best = brute_force(n, |x| p.fits_budget(x), |x| accumulated_value(&p.reqs, x));
            assert!(s.feasible && s.stats.proven);
            assert!(
                (s.av - best).abs() < 1e-9,
                "seed {seed}: {} vs {best}",
                s.av
            );
        }
    }
}
