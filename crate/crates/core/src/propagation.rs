//! Light graph convolution over the bipartite graph and its adjoint.
//!
//! Each layer is one application of the normalized adjacency operator: no
//! self-loops, feature transforms or nonlinearities. Users aggregate items and
//! items aggregate users from the previous layer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, NormMode};

/// Row-major node embeddings, users first then items.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{dim} table",
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    /// Entries drawn i.i.d. from `N(0, std²)`.
    pub fn random_normal<R: Rng>(rows: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let data = (0..rows * dim).map(|_| normal.sample(rng)).collect();
        Self { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &DenseTable) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    fn same_shape(&self, other: &DenseTable) -> bool {
        self.rows == other.rows && self.dim == other.dim
    }
}

/// Per-layer embeddings; `layers[0]` is the base table.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutputs {
    pub layers: Vec<DenseTable>,
}

impl LayerOutputs {
    /// Number of propagation steps `L`.
    pub fn num_hops(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.layers[0].dim()
    }
}

/// `out[dst] = dst_scale[dst] * Σ_{src ∈ N(dst)} src_scale[src] * input[src]`.
fn apply_operator(
    graph: &InteractionGraph,
    dst_scale: &[f64],
    src_scale: &[f64],
    input: &DenseTable,
    out: &mut DenseTable,
) {
    let dim = input.dim();
    out.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(row, acc)| {
            acc.fill(0.0);
            let (neighbors, offset) = graph.row_neighbors(row);
            for &n in neighbors {
                let src = n as usize + offset;
                let c = src_scale[src];
                for (a, &x) in acc.iter_mut().zip(input.row(src)) {
                    *a += c * x;
                }
            }
            let s = dst_scale[row];
            for a in acc.iter_mut() {
                *a *= s;
            }
        });
}

fn check_rows(graph: &InteractionGraph, table: &DenseTable) -> Result<()> {
    if table.rows() != graph.num_nodes() {
        return Err(Error::Dimension(format!(
            "table has {} rows but graph has {} nodes",
            table.rows(),
            graph.num_nodes()
        )));
    }
    Ok(())
}

/// Runs `num_hops` propagation steps from `base`.
pub fn propagate(
    graph: &InteractionGraph,
    base: &DenseTable,
    num_hops: usize,
    mode: NormMode,
) -> Result<LayerOutputs> {
    check_rows(graph, base)?;
    let (dst_scale, src_scale) = graph.norm_scales(mode);
    let mut layers = Vec::with_capacity(num_hops + 1);
    layers.push(base.clone());
    for l in 1..=num_hops {
        let mut next = DenseTable::zeros(base.rows(), base.dim());
        apply_operator(graph, &dst_scale, &src_scale, &layers[l - 1], &mut next);
        layers.push(next);
    }
    Ok(LayerOutputs { layers })
}

/// Pulls per-layer gradients `∂loss/∂v^(l)` back onto the base table.
///
/// The transpose swaps the destination and source scales, so symmetric mode
/// reuses the forward operator unchanged.
pub fn propagate_adjoint(
    graph: &InteractionGraph,
    grad_layers: &[DenseTable],
    mode: NormMode,
) -> Result<DenseTable> {
    let last = grad_layers
        .last()
        .ok_or_else(|| Error::Dimension("empty gradient stack".into()))?;
    for g in grad_layers {
        check_rows(graph, g)?;
        if !g.same_shape(last) {
            return Err(Error::Dimension("gradient layers differ in shape".into()));
        }
    }
    let (dst_scale, src_scale) = graph.norm_scales(mode);
    let mut acc = last.clone();
    let mut scratch = DenseTable::zeros(last.rows(), last.dim());
    for g in grad_layers.iter().rev().skip(1) {
        apply_operator(graph, &src_scale, &dst_scale, &acc, &mut scratch);
        for (s, &x) in scratch.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *s += x;
        }
        std::mem::swap(&mut acc, &mut scratch);
    }
    Ok(acc)
}
