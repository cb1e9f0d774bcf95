#![allow(dead_code)]

use bitgear::{DenseTable, InteractionGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bipartite graph where every user and item has at least one edge.
pub fn random_graph(m: usize, n: usize, density: f64, seed: u64) -> InteractionGraph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if r.random::<f64>() < density {
                edges.push((u, i));
            }
        }
    }
    for u in 0..m {
        edges.push((u, r.random_range(0..n)));
    }
    for i in 0..n {
        edges.push((r.random_range(0..m), i));
    }
    InteractionGraph::from_edges(m, n, &edges).unwrap()
}

pub fn random_table(rows: usize, dim: usize, seed: u64) -> DenseTable {
    let mut r = rng(seed);
    let data = (0..rows * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    DenseTable::from_vec(rows, dim, data).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Central difference of `f` along every coordinate of `x`.
pub fn finite_difference(x: &DenseTable, h: f64, mut f: impl FnMut(&DenseTable) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.as_slice().len())
        .map(|k| {
            let orig = probe.as_slice()[k];
            probe.as_mut_slice()[k] = orig + h;
            let up = f(&probe);
            probe.as_mut_slice()[k] = orig - h;
            let down = f(&probe);
            probe.as_mut_slice()[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise error, relative to the largest gradient entry.
pub fn max_scaled_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0f64, |m, x| m.max(x.abs())).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

/// Largest elementwise relative error, with `floor` guarding near-zero entries.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
