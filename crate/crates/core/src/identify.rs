//! Identification of explicit value dependencies from binary user preferences.
//!
//! The causal strength of `r_j` on `r_i` is measured with the Eells measure
//! `eta = p(r_i | r_j) - p(r_i | not r_j)`. Its sign gives the quality of the
//! edge `i -> j` and a membership function of `|eta|` gives its strength.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vdg::{Quality, ValueDependencyGraph, VdgError};

#[derive(Debug, Error, PartialEq)]
pub enum IdentifyError {
    #[error("preference matrix needs at least one user and one requirement")]
    EmptyMatrix,
    #[error("cell ({user}, {req}) holds {value}; preferences must be 0 or 1")]
    NonBinary { user: usize, req: usize, value: u8 },
    #[error("expected {expected} cells, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("requirement index {index} out of range for {n} requirements")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("causal strength of a requirement on itself is undefined (index {0})")]
    SamePair(usize),
    #[error("causal strength {0} outside [-1, 1]")]
    EtaOutOfRange(f64),
    #[error("smoothing must be a finite non-negative number, got {0}")]
    InvalidSmoothing(f64),
    #[error("ramp needs 0 <= low < high <= 1, got low={low}, high={high}")]
    InvalidRamp { low: f64, high: f64 },
    #[error("dependency identification needs at least two requirements")]
    TooFewRequirements,
    #[error(transparent)]
    Graph(#[from] VdgError),
}

/// Users by requirements, row-major, cells in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceMatrix {
    users: usize,
    n: usize,
    cells: Vec<u8>,
}

impl PreferenceMatrix {
    pub fn new(users: usize, n: usize, cells: Vec<u8>) -> Result<Self, IdentifyError> {
        if users == 0 || n == 0 {
            return Err(IdentifyError::EmptyMatrix);
        }
        if cells.len() != users * n {
            return Err(IdentifyError::ShapeMismatch {
                expected: users * n,
                got: cells.len(),
            });
        }
        if let Some(pos) = cells.iter().position(|&c| c > 1) {
            return Err(IdentifyError::NonBinary {
                user: pos / n,
                req: pos % n,
                value: cells[pos],
            });
        }
        Ok(PreferenceMatrix { users, n, cells })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, IdentifyError> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(IdentifyError::ShapeMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        Self::new(rows.len(), n, rows.concat())
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, user: usize, req: usize) -> u8 {
        self.cells[user * self.n + req]
    }

    pub fn row(&self, user: usize) -> &[u8] {
        &self.cells[user * self.n..(user + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.n)
    }

    /// Column means.
    pub fn means(&self) -> Vec<f64> {
        let mut sums = vec![0usize; self.n];
        for row in self.rows() {
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += c as usize;
            }
        }
        sums.into_iter()
            .map(|s| s as f64 / self.users as f64)
            .collect()
    }

    /// Stacks the rows of `other` under those of `self`.
    pub fn stacked(&self, other: &PreferenceMatrix) -> Result<Self, IdentifyError> {
        if other.n != self.n {
            return Err(IdentifyError::ShapeMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        Self::new(self.users + other.users, self.n, cells)
    }
}

/// Maps `|eta|` to a dependency strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MembershipFunction {
    Identity,
    /// 0 below `low`, 1 at or above `high`, linear in between.
    Ramp {
        low: f64,
        high: f64,
    },
}

impl MembershipFunction {
    pub fn ramp(low: f64, high: f64) -> Result<Self, IdentifyError> {
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(IdentifyError::InvalidRamp { low, high });
        }
        Ok(MembershipFunction::Ramp { low, high })
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            MembershipFunction::Identity => x,
            MembershipFunction::Ramp { low, high } => {
                if x < low {
                    0.0
                } else if x >= high {
                    1.0
                } else {
                    (x - low) / (high - low)
                }
            }
        }
    }
}

/// Which conditioning class had no users when smoothing was off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DegenerateClass {
    /// No user selected `r_j`, so `p(r_i | r_j)` was taken as 0.
    NoneSelected,
    /// Every user selected `r_j`, so `p(r_i | not r_j)` was taken as 0.
    AllSelected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EellsEstimate {
    pub eta: f64,
    pub warning: Option<DegenerateClass>,
}

/// Contingency counts of `(r_i, r_j)` over all users.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct PairCounts {
    both: usize,
    i_without_j: usize,
    j_total: usize,
    users: usize,
}

impl PairCounts {
    fn tally(prefs: &PreferenceMatrix, i: usize, j: usize) -> Self {
        let mut c = PairCounts {
            users: prefs.users(),
            ..Default::default()
        };
        for row in prefs.rows() {
            match (row[i], row[j]) {
                (1, 1) => {
                    c.both += 1;
                    c.j_total += 1;
                }
                (_, 1) => c.j_total += 1,
                (1, _) => c.i_without_j += 1,
                _ => {}
            }
        }
        c
    }

    fn eta(&self, smoothing: f64) -> EellsEstimate {
        let not_j = self.users - self.j_total;
        let mut warning = None;
        let mut conditional = |hits: usize, total: usize, class: DegenerateClass| {
            if smoothing > 0.0 {
                (hits as f64 + smoothing) / (total as f64 + 2.0 * smoothing)
            } else if total == 0 {
                warning = Some(class);
                0.0
            } else {
                hits as f64 / total as f64
            }
        };
        let given_j = conditional(self.both, self.j_total, DegenerateClass::NoneSelected);
        let given_not_j = conditional(self.i_without_j, not_j, DegenerateClass::AllSelected);
        EellsEstimate {
            eta: given_j - given_not_j,
            warning,
        }
    }
}

fn check_smoothing(smoothing: f64) -> Result<(), IdentifyError> {
    if smoothing.is_finite() && smoothing >= 0.0 {
        Ok(())
    } else {
        Err(IdentifyError::InvalidSmoothing(smoothing))
    }
}

/// Eells causal strength of `r_j` on `r_i`.
///
/// With `smoothing = 0`, an empty conditioning class contributes a
/// conditional probability of 0 and the estimate carries a warning. With
/// `smoothing > 0` each conditional is `(hits + a) / (total + 2a)`.
pub fn eells(
    prefs: &PreferenceMatrix,
    i: usize,
    j: usize,
    smoothing: f64,
) -> Result<EellsEstimate, IdentifyError> {
    for index in [i, j] {
        if index >= prefs.n() {
            return Err(IdentifyError::IndexOutOfRange {
                index,
                n: prefs.n(),
            });
        }
    }
    if i == j {
        return Err(IdentifyError::SamePair(i));
    }
    check_smoothing(smoothing)?;
    Ok(PairCounts::tally(prefs, i, j).eta(smoothing))
}

pub fn quality_from_eells(eta: f64) -> Result<Quality, IdentifyError> {
    if !(-1.0..=1.0).contains(&eta) {
        return Err(IdentifyError::EtaOutOfRange(eta));
    }
    Ok(if eta > 0.0 {
        Quality::Positive
    } else if eta < 0.0 {
        Quality::Negative
    } else {
        Quality::Nonspecified
    })
}

pub fn strength_from_eells(eta: f64, f: &MembershipFunction) -> f64 {
    f.apply(eta.abs().min(1.0))
}

/// A pair whose estimate hit an empty conditioning class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairWarning {
    pub from: usize,
    pub to: usize,
    pub class: DegenerateClass,
}

#[derive(Debug, Clone)]
pub struct Identified {
    pub graph: ValueDependencyGraph,
    pub warnings: Vec<PairWarning>,
}

/// Computes `eta` for every ordered pair and keeps the pairs whose mapped
/// strength is positive.
pub fn build_vdg(
    prefs: &PreferenceMatrix,
    f: &MembershipFunction,
    smoothing: f64,
) -> Result<Identified, IdentifyError> {
    let n = prefs.n();
    if n < 2 {
        return Err(IdentifyError::TooFewRequirements);
    }
    check_smoothing(smoothing)?;

    // One pass over the users for all pair counts.
    let mut joint = vec![0usize; n * n];
    let mut ones = vec![0usize; n];
    let mut selected = Vec::with_capacity(n);
    for row in prefs.rows() {
        selected.clear();
        selected.extend(
            row.iter()
                .enumerate()
                .filter(|(_, &c)| c == 1)
                .map(|(k, _)| k),
        );
        for &a in &selected {
            ones[a] += 1;
            for &b in &selected {
                joint[a * n + b] += 1;
            }
        }
    }

    let mut graph = ValueDependencyGraph::new(n);
    let mut warnings = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let counts = PairCounts {
                both: joint[i * n + j],
                i_without_j: ones[i] - joint[i * n + j],
                j_total: ones[j],
                users: prefs.users(),
            };
            let est = counts.eta(smoothing);
            if let Some(class) = est.warning {
                warnings.push(PairWarning {
                    from: i,
                    to: j,
                    class,
                });
            }
            let strength = strength_from_eells(est.eta, f);
            if strength > 0.0 {
                graph.add_edge(i, j, quality_from_eells(est.eta)?, strength)?;
            }
        }
    }
    Ok(Identified { graph, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicKind {
    Requires,
    Conflicts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrinsicDependency {
    pub from: usize,
    pub to: usize,
    pub kind: IntrinsicKind,
}

/// Overlays full-strength structural dependencies: `requires` becomes a
/// positive edge of strength 1, `conflicts` a negative one.
pub fn merge_intrinsic(
    g: &ValueDependencyGraph,
    intrinsic: &[IntrinsicDependency],
) -> Result<ValueDependencyGraph, IdentifyError> {
    let mut out = g.clone();
    for dep in intrinsic {
        let quality = match dep.kind {
            IntrinsicKind::Requires => Quality::Positive,
            IntrinsicKind::Conflicts => Quality::Negative,
        };
        out.set_edge(dep.from, dep.to, quality, 1.0)?;
    }
    Ok(out)
}
