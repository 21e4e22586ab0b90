//! Signed directed fuzzy graphs of value-related dependencies.
//!
//! An edge `(i, j)` states that selecting requirement `j` influences the value
//! of requirement `i`. Every edge carries a [`Quality`] (positive or negative)
//! and a strength in `(0, 1]`. Implicit dependencies follow paths: a path is
//! as strong as its weakest edge and its quality is the sign product of its
//! edges. [`propagate`] computes the strongest positive and negative
//! dependency for every ordered pair, and from those the overall influence.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VdgError {
    #[error("node index {index} out of range for graph of {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("self-dependency on node {0} is not allowed")]
    SelfEdge(usize),
    #[error("edge ({from}, {to}) already present")]
    DuplicateEdge { from: usize, to: usize },
    #[error("edge strength {0} outside (0, 1]")]
    InvalidStrength(f64),
    #[error("explicit edges must be positive or negative")]
    UnspecifiedQuality,
    #[error("path must contain at least two nodes")]
    PathTooShort,
    #[error("path repeats node {0}")]
    RepeatedNode(usize),
    #[error("path step ({from}, {to}) is not an edge of the graph")]
    MissingEdge { from: usize, to: usize },
    #[error("{0}")]
    Domain(&'static str),
}

/// Qualitative sign of a dependency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "+-")]
    Nonspecified,
}

impl Quality {
    /// Serial inference of two consecutive qualities. Non-specified absorbs.
    pub fn product(self, other: Quality) -> Quality {
        use Quality::*;
        match (self, other) {
            (Nonspecified, _) | (_, Nonspecified) => Nonspecified,
            (Positive, Positive) | (Negative, Negative) => Positive,
            (Positive, Negative) | (Negative, Positive) => Negative,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Quality::Positive => "+",
            Quality::Negative => "-",
            Quality::Nonspecified => "+-",
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub quality: Quality,
    pub strength: f64,
}

impl Edge {
    fn checked(quality: Quality, strength: f64) -> Result<Self, VdgError> {
        if quality == Quality::Nonspecified {
            return Err(VdgError::UnspecifiedQuality);
        }
        if !(strength > 0.0 && strength <= 1.0) {
            return Err(VdgError::InvalidStrength(strength));
        }
        Ok(Edge { quality, strength })
    }
}

/// Value dependency graph over requirements `0..n`.
///
/// Absent pairs have strength 0 and non-specified quality.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueDependencyGraph {
    n: usize,
    edges: BTreeMap<(usize, usize), Edge>,
}

impl ValueDependencyGraph {
    pub fn new(n: usize) -> Self {
        ValueDependencyGraph {
            n,
            edges: BTreeMap::new(),
        }
    }

    /// Builds a graph from `(from, to, quality, strength)` tuples, rejecting
    /// parallel edges.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, VdgError>
    where
        I: IntoIterator<Item = (usize, usize, Quality, f64)>,
    {
        let mut g = ValueDependencyGraph::new(n);
        for (from, to, quality, strength) in edges {
            g.add_edge(from, to, quality, strength)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_pair(&self, from: usize, to: usize) -> Result<(), VdgError> {
        for index in [from, to] {
            if index >= self.n {
                return Err(VdgError::IndexOutOfRange { index, n: self.n });
            }
        }
        if from == to {
            return Err(VdgError::SelfEdge(from));
        }
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        from: usize,
        to: usize,
        quality: Quality,
        strength: f64,
    ) -> Result<(), VdgError> {
        self.check_pair(from, to)?;
        let edge = Edge::checked(quality, strength)?;
        if self.edges.contains_key(&(from, to)) {
            return Err(VdgError::DuplicateEdge { from, to });
        }
        self.edges.insert((from, to), edge);
        Ok(())
    }

    /// Inserts or replaces the edge `(from, to)`.
    pub fn set_edge(
        &mut self,
        from: usize,
        to: usize,
        quality: Quality,
        strength: f64,
    ) -> Result<Option<Edge>, VdgError> {
        self.check_pair(from, to)?;
        let edge = Edge::checked(quality, strength)?;
        Ok(self.edges.insert((from, to), edge))
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<Edge> {
        self.edges.get(&(from, to)).copied()
    }

    pub fn strength(&self, from: usize, to: usize) -> f64 {
        self.edge(from, to).map_or(0.0, |e| e.strength)
    }

    pub fn quality(&self, from: usize, to: usize) -> Quality {
        self.edge(from, to)
            .map_or(Quality::Nonspecified, |e| e.quality)
    }

    /// Edges in `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Edge)> + '_ {
        self.edges.iter().map(|(&(i, j), &e)| (i, j, e))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn negative_edge_count(&self) -> usize {
        self.edges
            .values()
            .filter(|e| e.quality == Quality::Negative)
            .count()
    }
}

/// A dependency path `r(0), ..., r(k)` with `k >= 1` and no repeated node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyPath(Vec<usize>);

impl DependencyPath {
    pub fn new(nodes: Vec<usize>) -> Result<Self, VdgError> {
        if nodes.len() < 2 {
            return Err(VdgError::PathTooShort);
        }
        let mut seen = std::collections::HashSet::with_capacity(nodes.len());
        for &v in &nodes {
            if !seen.insert(v) {
                return Err(VdgError::RepeatedNode(v));
            }
        }
        Ok(DependencyPath(nodes))
    }

    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    fn steps<'g>(
        &'g self,
        g: &'g ValueDependencyGraph,
    ) -> impl Iterator<Item = Result<Edge, VdgError>> + 'g {
        self.0.windows(2).map(move |w| {
            let (from, to) = (w[0], w[1]);
            if from >= g.n() || to >= g.n() {
                return Err(VdgError::IndexOutOfRange {
                    index: from.max(to),
                    n: g.n(),
                });
            }
            g.edge(from, to).ok_or(VdgError::MissingEdge { from, to })
        })
    }
}

/// Strength of a path: the weakest of its edges.
pub fn path_strength(path: &DependencyPath, g: &ValueDependencyGraph) -> Result<f64, VdgError> {
    path.steps(g)
        .try_fold(f64::INFINITY, |acc, e| e.map(|e| acc.min(e.strength)))
}

/// Quality of a path: serial inference over its edge qualities.
pub fn path_quality(path: &DependencyPath, g: &ValueDependencyGraph) -> Result<Quality, VdgError> {
    let mut steps = path.steps(g);
    let first = steps.next().ok_or(VdgError::PathTooShort)??.quality;
    steps.try_fold(first, |acc, e| e.map(|e| acc.product(e.quality)))
}

/// All-pairs strongest positive and negative dependencies plus the overall
/// influence `I = rho_pos - rho_neg`. Row `i` is the dependent requirement,
/// column `j` the influencing one. Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    n: usize,
    rho_pos: Vec<f64>,
    rho_neg: Vec<f64>,
    influence: Vec<f64>,
}

impl InfluenceMatrix {
    fn from_parts(n: usize, mut rho_pos: Vec<f64>, mut rho_neg: Vec<f64>) -> Self {
        for i in 0..n {
            rho_pos[i * n + i] = 0.0;
            rho_neg[i * n + i] = 0.0;
        }
        let influence = rho_pos.iter().zip(&rho_neg).map(|(p, q)| p - q).collect();
        InfluenceMatrix {
            n,
            rho_pos,
            rho_neg,
            influence,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_parts(n, vec![0.0; n * n], vec![0.0; n * n])
    }

    /// Builds a matrix from overall influences alone, e.g. when a published
    /// influence table is available but the underlying graph is not. The
    /// positive and negative parts are recovered as `max(I, 0)` and
    /// `max(-I, 0)`.
    pub fn from_influence(rows: &[Vec<f64>]) -> Result<Self, VdgError> {
        let n = rows.len();
        let mut pos = vec![0.0; n * n];
        let mut neg = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(VdgError::Domain("influence matrix must be square"));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(VdgError::Domain("influence entries must lie in [-1, 1]"));
                }
                if i == j && v != 0.0 {
                    return Err(VdgError::Domain("influence diagonal must be zero"));
                }
                if v > 0.0 {
                    pos[i * n + j] = v;
                } else if v < 0.0 {
                    neg[i * n + j] = -v;
                }
            }
        }
        let mut m = Self::from_parts(n, pos, neg);
        // Keep the supplied values bit-exact rather than recomputing pos - neg.
        for (i, row) in rows.iter().enumerate() {
            m.influence[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho_pos(&self, i: usize, j: usize) -> f64 {
        self.rho_pos[i * self.n + j]
    }

    pub fn rho_neg(&self, i: usize, j: usize) -> f64 {
        self.rho_neg[i * self.n + j]
    }

    /// Overall influence of `j` on the value of `i`, without bounds checks.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.influence[i * self.n + j]
    }

    /// Row `i` of the overall influence matrix.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.influence[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.influence.chunks(self.n.max(1)).take(self.n)
    }
}

/// Overall influence of `j` on `i`.
pub fn influence(m: &InfluenceMatrix, i: usize, j: usize) -> Result<f64, VdgError> {
    for index in [i, j] {
        if index >= m.n {
            return Err(VdgError::IndexOutOfRange { index, n: m.n });
        }
    }
    Ok(m.get(i, j))
}

/// One sweep of the four-case max-min relaxation over every intermediate
/// node. Returns whether any entry improved.
fn relax_pass(n: usize, pos: &mut [f64], neg: &mut [f64]) -> bool {
    let mut changed = false;
    for k in 0..n {
        for i in 0..n {
            let ik = i * n + k;
            if pos[ik] <= 0.0 && neg[ik] <= 0.0 {
                continue;
            }
            for j in 0..n {
                let ij = i * n + j;
                let kj = k * n + j;
                let (ik_pos, ik_neg) = (pos[ik], neg[ik]);
                let c = ik_pos.min(pos[kj]);
                if c > pos[ij] {
                    pos[ij] = c;
                    changed = true;
                }
                let c = ik_neg.min(neg[kj]);
                if c > pos[ij] {
                    pos[ij] = c;
                    changed = true;
                }
                let c = ik_pos.min(neg[kj]);
                if c > neg[ij] {
                    neg[ij] = c;
                    changed = true;
                }
                let c = ik_neg.min(pos[kj]);
                if c > neg[ij] {
                    neg[ij] = c;
                    changed = true;
                }
            }
        }
    }
    changed
}

/// Computes strongest positive and negative dependencies for every pair.
///
/// Runs the modified Floyd-Warshall relaxation and repeats full passes until
/// nothing changes, so sign-alternating cycles are fully accounted for. Pairs
/// without a path of a given sign get strength 0; the diagonal is reported
/// as 0.
pub fn propagate(g: &ValueDependencyGraph) -> InfluenceMatrix {
    propagate_counted(g).0
}

/// [`propagate`] plus the number of relaxation passes performed.
pub fn propagate_counted(g: &ValueDependencyGraph) -> (InfluenceMatrix, usize) {
    let n = g.n();
    let mut pos = vec![0.0; n * n];
    let mut neg = vec![0.0; n * n];
    for (i, j, e) in g.edges() {
        match e.quality {
            Quality::Positive => pos[i * n + j] = e.strength,
            Quality::Negative => neg[i * n + j] = e.strength,
            Quality::Nonspecified => {}
        }
    }
    let mut passes = 1;
    while relax_pass(n, &mut pos, &mut neg) {
        passes += 1;
    }
    (InfluenceMatrix::from_parts(n, pos, neg), passes)
}

/// Value dependency level `k / (n (n - 1))`.
pub fn vdl(g: &ValueDependencyGraph) -> Result<f64, VdgError> {
    if g.n() < 2 {
        return Err(VdgError::Domain("VDL needs at least two requirements"));
    }
    Ok(g.edge_count() as f64 / (g.n() * (g.n() - 1)) as f64)
}

/// Negative value dependency level `m / k`.
pub fn nvdl(g: &ValueDependencyGraph) -> Result<f64, VdgError> {
    if g.edge_count() == 0 {
        return Err(VdgError::Domain(
            "NVDL is undefined for a graph without edges",
        ));
    }
    Ok(g.negative_edge_count() as f64 / g.edge_count() as f64)
}
