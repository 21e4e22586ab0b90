mod common;

use common::{simple_path_closure, walk_closure};
use proptest::prelude::*;
use relplan::sim::random_vdg;
use relplan::vdg::{propagate, propagate_counted, Quality, ValueDependencyGraph};

fn check_against_walks(g: &ValueDependencyGraph) -> Result<(), String> {
    let m = propagate(g);
    let (pos, neg) = walk_closure(g);
    for i in 0..g.n() {
        for j in 0..g.n() {
            if m.rho_pos(i, j) != pos[i][j] || m.rho_neg(i, j) != neg[i][j] {
                return Err(format!(
                    "({i},{j}): got +{} -{}, oracle +{} -{}",
                    m.rho_pos(i, j),
                    m.rho_neg(i, j),
                    pos[i][j],
                    neg[i][j]
                ));
            }
            if m.get(i, j) != m.rho_pos(i, j) - m.rho_neg(i, j) {
                return Err(format!("({i},{j}): influence is not the difference"));
            }
        }
    }
    Ok(())
}

#[test]
fn matches_walk_oracle_over_levels() {
    let mut graphs = 0;
    for (l, level) in (1..=9).map(|k| k as f64 / 10.0).enumerate() {
        for trial in 0..30u64 {
            let n = 2 + (trial as usize % 7);
            let g =
                random_vdg(n, level, (trial % 5) as f64 / 4.0, 1000 * l as u64 + trial).unwrap();
            check_against_walks(&g).unwrap();
            graphs += 1;
        }
    }
    assert!(graphs >= 200);
}

#[test]
fn positive_only_graphs_agree_with_simple_paths() {
    // Without negative edges a repeated node cannot improve a bottleneck.
    for seed in 0..100 {
        let g = random_vdg(2 + seed as usize % 7, 0.4, 0.0, seed).unwrap();
        let m = propagate(&g);
        let (pos, neg) = simple_path_closure(&g);
        for i in 0..g.n() {
            for j in 0..g.n() {
                assert_eq!(m.rho_pos(i, j), pos[i][j]);
                assert_eq!(m.rho_neg(i, j), neg[i][j]);
            }
        }
    }
}

#[test]
fn sign_flipping_cycle_differs_from_simple_paths() {
    // 0 -> 1 (+), 1 -> 2 (-), 2 -> 1 (+): the walk 0,1,2,1 is negative
    // into 1, which no simple path is.
    let g = ValueDependencyGraph::from_edges(
        3,
        [
            (0, 1, Quality::Positive, 0.9),
            (1, 2, Quality::Negative, 0.8),
            (2, 1, Quality::Positive, 0.7),
        ],
    )
    .unwrap();
    let m = propagate(&g);
    let (_, neg) = simple_path_closure(&g);
    assert_eq!(neg[0][1], 0.0);
    assert_eq!(m.rho_neg(0, 1), 0.7);
    check_against_walks(&g).unwrap();
}

#[test]
fn converges_in_few_passes() {
    for seed in 0..50 {
        let g = random_vdg(8, 0.5, 0.5, seed).unwrap();
        let (_, passes) = propagate_counted(&g);
        assert!(passes <= 4, "{passes}");
    }
}

proptest! {
    #[test]
    fn walk_oracle_property(seed in any::<u64>(), n in 2usize..9, level in 0.0f64..1.0, neg in 0.0f64..1.0) {
        let g = random_vdg(n, level, neg, seed).unwrap();
        prop_assert!(check_against_walks(&g).is_ok());
    }

    #[test]
    fn entries_bounded_and_diagonal_zero(seed in any::<u64>(), n in 2usize..9, level in 0.0f64..1.0) {
        let g = random_vdg(n, level, 0.5, seed).unwrap();
        let m = propagate(&g);
        for i in 0..n {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..n {
                prop_assert!((0.0..=1.0).contains(&m.rho_pos(i, j)));
                prop_assert!((0.0..=1.0).contains(&m.rho_neg(i, j)));
                // An explicit edge is itself a path.
                if let Some(e) = g.edge(i, j) {
                    let r = if e.quality == Quality::Positive { m.rho_pos(i, j) } else { m.rho_neg(i, j) };
                    prop_assert!(r >= e.strength);
                }
            }
        }
    }
}
