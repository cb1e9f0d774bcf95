//! Batch loss and its exact gradient with respect to the base embeddings.
//!
//! Forward: propagate the base table, optionally binarize each layer to
//! `α·sign(v)`, score with the weighted segment inner products. Backward: score
//! gradients are scattered onto the per-layer effective embeddings, mapped
//! through the sign estimator (scalers held constant), then pulled back to the
//! base table with the propagation adjoint.
//!
//! Gradient accumulation is bucketed by destination row and replayed in
//! generation order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::cache::TeacherCache;
use super::config::Estimator;
use super::loss::{bpr_loss_and_score_grads, distill_loss_and_score_grads, sign_derivative};
use super::sampler::Triple;
use crate::binarize::sign;
use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, NormMode};
use crate::propagation::{propagate, propagate_adjoint, DenseTable};
use crate::scoring::{dot, LayerWeights};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quantization {
    /// Full-precision layers (teacher forward, or binarization switched off).
    Identity,
    /// `α·sign(v)` per layer with a surrogate sign gradient.
    Sign { estimator: Estimator, gamma: f64 },
}

/// Teacher pseudo-positives and their rank weights `w_1..w_R`.
#[derive(Clone, Copy, Debug)]
pub struct Distillation<'a> {
    pub cache: &'a TeacherCache,
    pub rank_weights: &'a [f64],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub bpr: f64,
    pub id: f64,
    pub l2: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.bpr + self.id + self.l2
    }

    pub fn is_finite(&self) -> bool {
        self.bpr.is_finite() && self.id.is_finite() && self.l2.is_finite()
    }

    pub(crate) fn add(&mut self, other: &LossParts) {
        self.bpr += other.bpr;
        self.id += other.id;
        self.l2 += other.l2;
    }
}

/// `grad[layer][target] += coef · effective[layer][source]`
#[derive(Clone, Copy, Debug)]
struct Contribution {
    layer: u32,
    target: u32,
    source: u32,
    coef: f64,
}

pub struct Objective<'a> {
    pub graph: &'a InteractionGraph,
    pub weights: &'a LayerWeights,
    pub norm_mode: NormMode,
    pub l2: f64,
    pub quantization: Quantization,
    pub distillation: Option<Distillation<'a>>,
}

struct Forward {
    /// Pre-quantization layers `v^(l)`.
    layers: Vec<DenseTable>,
    /// What the scores see: `v^(l)` or `α·sign(v^(l))`.
    effective: Vec<DenseTable>,
    /// `[layer][row]`, only for sign quantization.
    alphas: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    fn num_hops(&self) -> usize {
        self.weights.len() - 1
    }

    fn forward(&self, base: &DenseTable) -> Result<Forward> {
        let outs = propagate(self.graph, base, self.num_hops(), self.norm_mode)?;
        match self.quantization {
            Quantization::Identity => Ok(Forward {
                effective: outs.layers.clone(),
                layers: outs.layers,
                alphas: Vec::new(),
            }),
            Quantization::Sign { .. } => {
                let d = base.dim();
                let mut effective = Vec::with_capacity(outs.layers.len());
                let mut alphas = Vec::with_capacity(outs.layers.len());
                for layer in &outs.layers {
                    let mut e = DenseTable::zeros(layer.rows(), d);
                    let a: Vec<f64> = e
                        .as_mut_slice()
                        .par_chunks_mut(d)
                        .enumerate()
                        .map(|(r, out)| {
                            let v = layer.row(r);
                            let alpha = v.iter().map(|x| x.abs()).sum::<f64>() / d as f64;
                            for (o, &x) in out.iter_mut().zip(v) {
                                *o = alpha * sign(x) as f64;
                            }
                            alpha
                        })
                        .collect();
                    effective.push(e);
                    alphas.push(a);
                }
                Ok(Forward {
                    layers: outs.layers,
                    effective,
                    alphas,
                })
            }
        }
    }

    /// Loss of one batch.
    pub fn loss(&self, base: &DenseTable, batch: &[Triple]) -> Result<LossParts> {
        Ok(self.evaluate(base, batch, false)?.0)
    }

    /// Loss of one batch and `∂loss/∂base`.
    pub fn loss_and_grad(&self, base: &DenseTable, batch: &[Triple]) -> Result<(LossParts, DenseTable)> {
        let (loss, grad) = self.evaluate(base, batch, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    fn evaluate(&self, base: &DenseTable, batch: &[Triple], need_grad: bool) -> Result<(LossParts, Option<DenseTable>)> {
        let m = self.graph.num_users();
        let n_rows = self.graph.num_nodes();
        if let Some(dist) = &self.distillation {
            dist.cache
                .check_shape(m, self.weights.len(), self.graph.num_items())?;
            if dist.rank_weights.len() != dist.cache.r() {
                return Err(Error::Dimension("rank weights do not match cache R".into()));
            }
        }
        let fwd = self.forward(base)?;
        let w2 = self.weights.squared();
        let eff = &fwd.effective;
        let seg_score = |a: usize, b: usize| -> f64 {
            eff.iter()
                .zip(&w2)
                .map(|(t, wl2)| wl2 * dot(t.row(a), t.row(b)))
                .sum()
        };

        let mut loss = LossParts::default();
        let mut contribs: Vec<Contribution> = Vec::new();

        // Ranking loss over the sampled triples.
        let bpr: Vec<(f64, f64, f64)> = batch
            .par_iter()
            .map(|&(u, i, j)| bpr_loss_and_score_grads(seg_score(u, m + i), seg_score(u, m + j)))
            .collect();
        loss.bpr = bpr.iter().map(|t| t.0).sum();
        if need_grad {
            contribs.reserve(batch.len() * 4 * w2.len());
            for (&(u, i, j), &(_, gp, gn)) in batch.iter().zip(&bpr) {
                for (l, &wl2) in w2.iter().enumerate() {
                    let (l, ur, ir, jr) = (l as u32, u as u32, (m + i) as u32, (m + j) as u32);
                    let (cp, cn) = (gp * wl2, gn * wl2);
                    contribs.push(Contribution { layer: l, target: ur, source: ir, coef: cp });
                    contribs.push(Contribution { layer: l, target: ur, source: jr, coef: cn });
                    contribs.push(Contribution { layer: l, target: ir, source: ur, coef: cp });
                    contribs.push(Contribution { layer: l, target: jr, source: ur, coef: cn });
                }
            }
        }

        // Layer-wise distillation over the batch's distinct users.
        let mut users: Vec<usize> = batch.iter().map(|t| t.0).collect();
        users.sort_unstable();
        users.dedup();
        if let Some(dist) = &self.distillation {
            let per_user: Vec<(f64, Vec<Contribution>)> = users
                .par_iter()
                .map(|&u| {
                    let scores: Vec<Vec<f64>> = w2
                        .iter()
                        .enumerate()
                        .map(|(l, &wl2)| {
                            let t = &eff[l];
                            dist.cache
                                .list(u, l)
                                .iter()
                                .map(|&it| wl2 * dot(t.row(u), t.row(m + it as usize)))
                                .collect()
                        })
                        .collect();
                    let (lu, grads) = distill_loss_and_score_grads(&scores, dist.rank_weights);
                    let mut local = Vec::new();
                    if need_grad {
                        local.reserve(2 * grads.len() * dist.cache.r());
                        for (l, gl) in grads.iter().enumerate() {
                            for (&it, &g) in dist.cache.list(u, l).iter().zip(gl) {
                                let c = g * w2[l];
                                let ir = (m + it as usize) as u32;
                                local.push(Contribution { layer: l as u32, target: u as u32, source: ir, coef: c });
                                local.push(Contribution { layer: l as u32, target: ir, source: u as u32, coef: c });
                            }
                        }
                    }
                    (lu, local)
                })
                .collect();
            for (lu, local) in per_user {
                loss.id += lu;
                contribs.extend(local);
            }
        }

        // L2 on the base rows touched by the batch.
        let mut touched: Vec<usize> = batch
            .iter()
            .flat_map(|&(u, i, j)| [u, m + i, m + j])
            .collect();
        touched.sort_unstable();
        touched.dedup();
        loss.l2 = self.l2 * touched.iter().map(|&r| dot(base.row(r), base.row(r))).sum::<f64>();

        if !need_grad {
            return Ok((loss, None));
        }

        let mut grads: Vec<DenseTable> = (0..w2.len()).map(|_| DenseTable::zeros(n_rows, base.dim())).collect();
        scatter(&contribs, eff, &mut grads, n_rows);

        if let Quantization::Sign { estimator, gamma } = self.quantization {
            let d = base.dim();
            for ((g, v), alphas) in grads.iter_mut().zip(&fwd.layers).zip(&fwd.alphas) {
                g.as_mut_slice()
                    .par_chunks_mut(d)
                    .enumerate()
                    .for_each(|(r, gr)| {
                        let a = alphas[r];
                        for (gk, &vk) in gr.iter_mut().zip(v.row(r)) {
                            *gk *= a * sign_derivative(vk, estimator, gamma);
                        }
                    });
            }
        }

        let mut grad_base = propagate_adjoint(self.graph, &grads, self.norm_mode)?;
        for &r in &touched {
            let row = base.row(r);
            for (g, &x) in grad_base.row_mut(r).iter_mut().zip(row) {
                *g += 2.0 * self.l2 * x;
            }
        }
        Ok((loss, Some(grad_base)))
    }
}

/// Applies contributions bucketed by `(layer, target)`, each bucket summed in
/// generation order.
fn scatter(contribs: &[Contribution], effective: &[DenseTable], grads: &mut [DenseTable], n_rows: usize) {
    let n_keys = grads.len() * n_rows;
    let mut offsets = vec![0usize; n_keys + 1];
    for c in contribs {
        offsets[c.layer as usize * n_rows + c.target as usize + 1] += 1;
    }
    for k in 0..n_keys {
        offsets[k + 1] += offsets[k];
    }
    let mut fill = offsets.clone();
    let mut order = vec![0u32; contribs.len()];
    for (idx, c) in contribs.iter().enumerate() {
        let key = c.layer as usize * n_rows + c.target as usize;
        order[fill[key]] = idx as u32;
        fill[key] += 1;
    }
    for (l, (grad, eff)) in grads.iter_mut().zip(effective).enumerate() {
        let d = grad.dim();
        let base_key = l * n_rows;
        grad.as_mut_slice()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(row, acc)| {
                let key = base_key + row;
                for &idx in &order[offsets[key]..offsets[key + 1]] {
                    let c = contribs[idx as usize];
                    for (a, &x) in acc.iter_mut().zip(eff.row(c.source as usize)) {
                        *a += c.coef * x;
                    }
                }
            });
    }
}
