mod common;

use bitgear::{propagate, propagate_adjoint, DenseTable, InteractionGraph, NormMode};
use common::{finite_difference, max_rel_err, random_graph, random_table, rel_err};
use proptest::prelude::*;

const MODES: [NormMode; 2] = [NormMode::Symmetric, NormMode::Left];

/// Dense matrix of one propagation step, built column by column from unit vectors.
fn operator_matrix(g: &InteractionGraph, mode: NormMode) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut cols = Vec::with_capacity(n);
    for c in 0..n {
        let mut e = DenseTable::zeros(n, 1);
        e.as_mut_slice()[c] = 1.0;
        cols.push(propagate(g, &e, 1, mode).unwrap().layers[1].as_slice().to_vec());
    }
    (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect()
}

fn stack_dot(a: &[DenseTable], b: &[DenseTable]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

#[test]
fn symmetric_operator_is_self_adjoint() {
    for seed in 0..5 {
        let g = random_graph(8, 12, 0.25, seed);
        assert!(g.num_nodes() <= 20);
        let a = operator_matrix(&g, NormMode::Symmetric);
        for r in 0..a.len() {
            for c in 0..a.len() {
                assert!((a[r][c] - a[c][r]).abs() < 1e-15, "A[{r}][{c}] != A[{c}][{r}]");
            }
        }
    }
}

#[test]
fn operator_entries_match_normalization() {
    let g = random_graph(6, 7, 0.3, 11);
    let m = g.num_users();
    for mode in MODES {
        let a = operator_matrix(&g, mode);
        for u in 0..m {
            for i in 0..g.num_items() {
                let (du, di) = (g.user_degree(u) as f64, g.item_degree(i) as f64);
                let (to_user, to_item) = match (g.has_edge(u, i), mode) {
                    (false, _) => (0.0, 0.0),
                    (true, NormMode::Symmetric) => (1.0 / (du * di).sqrt(), 1.0 / (du * di).sqrt()),
                    (true, NormMode::Left) => (1.0 / di, 1.0 / du),
                };
                assert!((a[u][m + i] - to_user).abs() < 1e-15);
                assert!((a[m + i][u] - to_item).abs() < 1e-15);
            }
            for v in 0..m {
                assert_eq!(a[u][v], 0.0);
            }
        }
    }
}

#[test]
fn adjoint_matches_finite_differences() {
    // Random 5-user / 5-item graph, L = 2, nonlinear scalar loss.
    let g = random_graph(5, 5, 0.4, 3);
    let base = random_table(g.num_nodes(), 3, 4);
    let probes: Vec<DenseTable> = (0..3).map(|l| random_table(g.num_nodes(), 3, 10 + l)).collect();
    for mode in MODES {
        let loss = |x: &DenseTable| {
            let out = propagate(&g, x, 2, mode).unwrap();
            let lin: f64 = stack_dot(&out.layers, &probes);
            let quad: f64 = out.layers[2].as_slice().iter().map(|v| v * v).sum();
            lin + 0.5 * quad
        };
        let out = propagate(&g, &base, 2, mode).unwrap();
        let mut grads = probes.clone();
        for (gk, &v) in grads[2].as_mut_slice().iter_mut().zip(out.layers[2].as_slice()) {
            *gk += v;
        }
        let analytic = propagate_adjoint(&g, &grads, mode).unwrap();
        let numeric = finite_difference(&base, 1e-4, loss);
        let err = max_rel_err(analytic.as_slice(), &numeric, 1e-6);
        assert!(err < 1e-4, "{mode}: max relative error {err}");
    }
}

#[test]
fn adjoint_of_zero_layers_is_identity() {
    let g = random_graph(3, 4, 0.5, 1);
    let gl = random_table(g.num_nodes(), 2, 2);
    for mode in MODES {
        assert_eq!(propagate_adjoint(&g, &[gl.clone()], mode).unwrap(), gl);
    }
}

#[test]
fn edge_sums_match_on_both_sides() {
    let g = random_graph(9, 13, 0.2, 5);
    let users: usize = (0..g.num_users()).map(|u| g.user_degree(u)).sum();
    let items: usize = (0..g.num_items()).map(|i| g.item_degree(i)).sum();
    assert_eq!(users, g.num_edges());
    assert_eq!(items, g.num_edges());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagation_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0, hops in 0usize..4) {
        let g = random_graph(6, 9, 0.3, seed);
        let x = random_table(g.num_nodes(), 4, seed + 1);
        let y = random_table(g.num_nodes(), 4, seed + 2);
        let combo: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| a * p + b * q).collect();
        let combo = DenseTable::from_vec(g.num_nodes(), 4, combo).unwrap();
        for mode in MODES {
            let pz = propagate(&g, &combo, hops, mode).unwrap();
            let px = propagate(&g, &x, hops, mode).unwrap();
            let py = propagate(&g, &y, hops, mode).unwrap();
            for l in 0..=hops {
                let zs = pz.layers[l].as_slice();
                for (k, z) in zs.iter().enumerate() {
                    let expect = a * px.layers[l].as_slice()[k] + b * py.layers[l].as_slice()[k];
                    prop_assert!((z - expect).abs() <= 1e-10, "layer {} entry {}: {} vs {}", l, k, z, expect);
                }
            }
        }
    }

    #[test]
    fn adjoint_identity(seed in 0u64..10_000, hops in 0usize..4, dim in 1usize..6) {
        let g = random_graph(7, 5, 0.3, seed);
        let x = random_table(g.num_nodes(), dim, seed ^ 0xabc);
        let gs: Vec<DenseTable> = (0..=hops as u64).map(|l| random_table(g.num_nodes(), dim, seed * 31 + l)).collect();
        for mode in MODES {
            let lhs = stack_dot(&propagate(&g, &x, hops, mode).unwrap().layers, &gs);
            let rhs = x.dot(&propagate_adjoint(&g, &gs, mode).unwrap());
            prop_assert!(rel_err(lhs, rhs) < 1e-8, "{}: {} vs {}", mode, lhs, rhs);
        }
    }
}
