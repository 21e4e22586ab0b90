#![allow(dead_code)]

use relplan::vdg::{Quality, ValueDependencyGraph};

/// Strongest positive and negative walk from every node to every other,
/// by label-correcting search over (node, sign) states.
pub fn walk_closure(g: &ValueDependencyGraph) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.n();
    let mut pos = vec![vec![0.0; n]; n];
    let mut neg = vec![vec![0.0; n]; n];
    let edges: Vec<_> = g.edges().collect();
    for s in 0..n {
        // best[node][0] = positive, best[node][1] = negative
        let mut best = vec![[0.0f64; 2]; n];
        let mut queue: Vec<(usize, usize, f64)> = Vec::new();
        for &(a, b, e) in &edges {
            if a == s {
                let sign = usize::from(e.quality == Quality::Negative);
                if e.strength > best[b][sign] {
                    best[b][sign] = e.strength;
                    queue.push((b, sign, e.strength));
                }
            }
        }
        while let Some((node, sign, strength)) = queue.pop() {
            if strength < best[node][sign] {
                continue;
            }
            for &(a, b, e) in &edges {
                if a != node {
                    continue;
                }
                let flip = usize::from(e.quality == Quality::Negative);
                let ns = sign ^ flip;
                let w = strength.min(e.strength);
                if w > best[b][ns] {
                    best[b][ns] = w;
                    queue.push((b, ns, w));
                }
            }
        }
        for t in 0..n {
            if t != s {
                pos[s][t] = best[t][0];
                neg[s][t] = best[t][1];
            }
        }
    }
    (pos, neg)
}

/// Same quantities restricted to simple paths, by exhaustive DFS.
pub fn simple_path_closure(g: &ValueDependencyGraph) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.n();
    let mut pos = vec![vec![0.0; n]; n];
    let mut neg = vec![vec![0.0; n]; n];
    for s in 0..n {
        let mut visited = vec![false; n];
        visited[s] = true;
        dfs(g, s, s, 1.0, false, &mut visited, &mut pos, &mut neg);
    }
    (pos, neg)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    g: &ValueDependencyGraph,
    s: usize,
    at: usize,
    strength: f64,
    negative: bool,
    visited: &mut [bool],
    pos: &mut [Vec<f64>],
    neg: &mut [Vec<f64>],
) {
    for t in 0..g.n() {
        let Some(e) = g.edge(at, t) else { continue };
        if visited[t] {
            continue;
        }
        let w = strength.min(e.strength);
        let sign = negative ^ (e.quality == Quality::Negative);
        let slot = if sign { &mut neg[s][t] } else { &mut pos[s][t] };
        if w > *slot {
            *slot = w;
        }
        visited[t] = true;
        dfs(g, s, t, w, sign, visited, pos, neg);
        visited[t] = false;
    }
}
