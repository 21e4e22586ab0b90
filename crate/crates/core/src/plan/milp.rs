//! Linearized DA-SRP program.
//!
//! Variables are laid out as `x_0..x_n` (binary), `p_0..p_n` and
//! `y_0..y_n` (continuous in `[0, 1]`), with `y_i` standing for `x_i p_i`.

use serde::{Deserialize, Serialize};

use super::{penalties, Model, PlanError, PlanProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Budget,
    Linearization,
    Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(k, a)| a * values[k]).sum()
    }

    pub fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
        }
    }
}

/// Maximize `objective . values` subject to `rows` and the variable bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    pub n: usize,
    pub kinds: Vec<VarKind>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl MilpInstance {
    pub fn x(&self, i: usize) -> usize {
        i
    }

    pub fn p(&self, i: usize) -> usize {
        self.n + i
    }

    pub fn y(&self, i: usize) -> usize {
        2 * self.n + i
    }

    pub fn var_count(&self, kind: VarKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    pub fn row_count(&self, kind: RowKind) -> usize {
        self.rows.iter().filter(|r| r.kind == kind).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, v)| c * v).sum()
    }

    /// Indices of violated rows, then `rows.len() + k` for every variable
    /// `k` outside its bounds or not integral when binary.
    pub fn violations(&self, values: &[f64], tol: f64) -> Vec<usize> {
        let mut bad: Vec<usize> = (0..self.rows.len())
            .filter(|&r| !self.rows[r].satisfied(values, tol))
            .collect();
        for (k, &v) in values.iter().enumerate() {
            let out = v < self.lower[k] - tol || v > self.upper[k] + tol;
            let frac = self.kinds[k] == VarKind::Binary && (v - v.round()).abs() > tol;
            if out || frac {
                bad.push(self.rows.len() + k);
            }
        }
        bad
    }

    /// Cheapest feasible completion of a selection: `p` at its forced
    /// penalty and `y = x p`.
    pub fn assignment(&self, problem: &PlanProblem, x: &[bool]) -> Vec<f64> {
        let p = penalties(&problem.infl, x);
        let mut values = vec![0.0; 3 * self.n];
        for i in 0..self.n {
            values[self.x(i)] = if x[i] { 1.0 } else { 0.0 };
            values[self.p(i)] = p[i];
            values[self.y(i)] = if x[i] { p[i] } else { 0.0 };
        }
        values
    }
}

pub fn linearize_da_srp(problem: &PlanProblem) -> Result<MilpInstance, PlanError> {
    problem.expect_model(Model::DaSrp)?;
    let n = problem.n();
    let v = problem.reqs.values();
    let mut kinds = vec![VarKind::Binary; n];
    kinds.extend(std::iter::repeat_n(VarKind::Continuous, 2 * n));
    let mut objective = vec![0.0; 3 * n];
    objective[..n].copy_from_slice(v);
    for i in 0..n {
        objective[2 * n + i] = -v[i];
    }
    let mut m = MilpInstance {
        n,
        kinds,
        lower: vec![0.0; 3 * n],
        upper: vec![1.0; 3 * n],
        objective,
        rows: Vec::with_capacity(1 + 4 * n + n * n.saturating_sub(1)),
    };

    m.rows.push(Row {
        kind: RowKind::Budget,
        coeffs: problem.reqs.costs().iter().copied().enumerate().collect(),
        sense: Sense::Le,
        rhs: problem.budget,
    });
    for i in 0..n {
        let (x, p, y) = (m.x(i), m.p(i), m.y(i));
        let lin = |coeffs: Vec<(usize, f64)>, sense, rhs| Row {
            kind: RowKind::Linearization,
            coeffs,
            sense,
            rhs,
        };
        m.rows.push(lin(vec![(y, 1.0), (p, -1.0)], Sense::Le, 0.0));
        m.rows.push(lin(vec![(y, 1.0), (x, -1.0)], Sense::Le, 0.0));
        m.rows
            .push(lin(vec![(y, 1.0), (p, -1.0), (x, -1.0)], Sense::Ge, -1.0));
        m.rows.push(lin(vec![(y, 1.0)], Sense::Ge, 0.0));
    }
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            // p_i >= (|I| + (1 - 2 x_j) I) / 2, rearranged.
            let iij = problem.infl.get(i, j);
            m.rows.push(Row {
                kind: RowKind::Penalty,
                coeffs: vec![(m.p(i), 1.0), (m.x(j), iij)],
                sense: Sense::Ge,
                rhs: (iij.abs() + iij) / 2.0,
            });
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::testing::random_problem;
    use crate::plan::{overall_value, RequirementSet};
    use crate::vdg::InfluenceMatrix;

    fn example3(budget: f64) -> PlanProblem {
        let infl = InfluenceMatrix::from_influence(&[
            vec![0.0, 0.5, 0.7, 0.7],
            vec![0.2, 0.0, 0.2, 0.3],
            vec![0.6, 0.5, 0.0, 0.7],
            vec![0.2, 0.2, 0.2, 0.0],
        ])
        .unwrap();
        let reqs = RequirementSet::unnamed(vec![1.0; 4], vec![20.0, 10.0, 50.0, 17.0]).unwrap();
        PlanProblem::new(reqs, infl, budget, Model::DaSrp).unwrap()
    }

    fn selections(n: usize) -> impl Iterator<Item = Vec<bool>> {
        (0u32..1 << n).map(move |mask| (0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    #[test]
    fn counts() {
        for n in [0, 1, 4, 9] {
            let (p, _) = random_problem(n as u64, n, Model::DaSrp, true);
            let m = linearize_da_srp(&p).unwrap();
            assert_eq!(m.var_count(VarKind::Binary), n);
            assert_eq!(m.var_count(VarKind::Continuous), 2 * n);
            assert_eq!(m.row_count(RowKind::Penalty), n * n.saturating_sub(1));
            assert_eq!(m.row_count(RowKind::Linearization), 4 * n);
            assert_eq!(m.row_count(RowKind::Budget), 1);
        }
    }

    #[test]
    fn zero_influence_reduces_to_knapsack() {
        let mut p = example3(2.0);
        p.infl = InfluenceMatrix::zeros(4);
        let m = linearize_da_srp(&p).unwrap();
        for r in m.rows.iter().filter(|r| r.kind == RowKind::Penalty) {
            assert_eq!(r.rhs, 0.0);
            assert!(r.coeffs.iter().all(|&(k, a)| k >= 4 || a == 0.0));
        }
        for x in selections(4) {
            let vals = m.assignment(&p, &x);
            assert!(vals[4..].iter().all(|&v| v == 0.0));
            let av: f64 = (0..4).filter(|&i| x[i]).map(|i| p.reqs.values()[i]).sum();
            assert_eq!(m.objective_value(&vals), av);
        }
    }

    #[test]
    fn enumeration_matches_overall_value() {
        let p = example3(3.0);
        let m = linearize_da_srp(&p).unwrap();
        let mut best = f64::NEG_INFINITY;
        let mut best_ov = f64::NEG_INFINITY;
        for x in selections(4) {
            let vals = m.assignment(&p, &x);
            let feasible = m.violations(&vals, 1e-12).is_empty();
            assert_eq!(feasible, p.fits_budget(&x));
            if !feasible {
                continue;
            }
            let obj = m.objective_value(&vals);
            assert!((obj - overall_value(&p.reqs, &p.infl, &x)).abs() < 1e-12);
            // Shaving any positive p or y breaks a row, so the completion is the
            // best one for this x.
            for k in 4..12 {
                if vals[k] > 0.0 {
                    let mut w = vals.clone();
                    w[k] -= 1e-6;
                    assert!(!m.violations(&w, 1e-12).is_empty(), "var {k} for {x:?}");
                }
            }
            best = best.max(obj);
            best_ov = best_ov.max(overall_value(&p.reqs, &p.infl, &x));
        }
        assert_eq!(best, best_ov);
        assert!(best >= 28.0);
    }

    #[test]
    fn fractional_x_is_flagged() {
        let p = example3(3.0);
        let m = linearize_da_srp(&p).unwrap();
        let mut vals = m.assignment(&p, &[true, false, false, false]);
        vals[1] = 0.5;
        assert!(m.violations(&vals, 1e-9).contains(&(m.rows.len() + 1)));
    }
}
