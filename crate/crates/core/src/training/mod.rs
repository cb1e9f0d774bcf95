//! Teacher pre-training, teacher-cache construction and binarized student
//! training with layer-wise inference distillation.

pub mod adam;
pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod objective;
pub mod sampler;

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use cache::{build_teacher_cache, TeacherCache};
pub use config::{Estimator, RankWeightScheme, TrainingConfig};
pub use loss::{bpr_loss_and_score_grads, distill_loss_and_score_grads, estimate_sign_gradient};
pub use objective::{Distillation, LossParts, Objective, Quantization};
pub use sampler::{sample_bpr_batch, Triple};

use crate::binarize::{build_tables, BinarizedTable};
use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::propagation::{propagate, DenseTable, LayerOutputs};
use crate::scoring::LayerWeights;

/// Fixed RNG streams carved out of the run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const TEACHER_SAMPLING: u64 = 1;
    pub const STUDENT_SAMPLING: u64 = 2;
}

/// A generator for one purpose, derived from the run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_bpr: f64,
    pub loss_id: f64,
    pub loss_l2: f64,
    pub lr: f64,
    pub secs: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} loss_bpr={:.6} loss_id={:.6} loss_l2={:.6} lr={} secs={:.3}",
            self.epoch, self.loss_bpr, self.loss_id, self.loss_l2, self.lr, self.secs
        )
    }
}

/// `N(0, init_std²)` base embeddings for every node.
pub fn init_base(graph: &InteractionGraph, cfg: &TrainingConfig) -> DenseTable {
    let mut rng = stream_rng(cfg.seed, streams::INIT);
    DenseTable::random_normal(graph.num_nodes(), cfg.dim, cfg.init_std, &mut rng)
}

pub fn layer_weights(cfg: &TrainingConfig) -> LayerWeights {
    LayerWeights::from_scheme(cfg.wl_scheme, cfg.layers)
}

fn run_epochs(
    objective: &Objective<'_>,
    base: &mut DenseTable,
    cfg: &TrainingConfig,
    epochs: usize,
    stream: u64,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<()> {
    let graph = objective.graph;
    let mut rng = stream_rng(cfg.seed, stream);
    let mut adam = Adam::new(base.as_slice().len());
    let batches = graph.num_edges().div_ceil(cfg.batch_size);
    for epoch in 1..=epochs {
        let start = Instant::now();
        let mut total = LossParts::default();
        for _ in 0..batches {
            let batch = sample_bpr_batch(graph, cfg.batch_size, &mut rng)?;
            let (loss, grad) = objective.loss_and_grad(base, &batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch} (bpr={}, id={}, l2={})",
                    loss.bpr, loss.id, loss.l2
                )));
            }
            total.add(&loss);
            adam.step(base.as_mut_slice(), grad.as_slice(), cfg.lr);
        }
        on_epoch(&EpochLog {
            epoch,
            loss_bpr: total.bpr,
            loss_id: total.id,
            loss_l2: total.l2,
            lr: cfg.lr,
            secs: start.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// Trains full-precision embeddings under BPR. Returns the base table and its
/// propagated layers.
pub fn pretrain_teacher(
    graph: &InteractionGraph,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(DenseTable, LayerOutputs)> {
    cfg.validate()?;
    let mut base = init_base(graph, cfg);
    let weights = layer_weights(cfg);
    let objective = Objective {
        graph,
        weights: &weights,
        norm_mode: cfg.norm_mode,
        l2: cfg.l2,
        quantization: Quantization::Identity,
        distillation: None,
    };
    run_epochs(&objective, &mut base, cfg, cfg.epochs_teacher, streams::TEACHER_SAMPLING, &mut on_epoch)?;
    let layers = propagate(graph, &base, cfg.layers, cfg.norm_mode)?;
    Ok((base, layers))
}

/// Top-R teacher pseudo-positives per user and layer.
pub fn teacher_cache(
    graph: &InteractionGraph,
    teacher_base: &DenseTable,
    cfg: &TrainingConfig,
) -> Result<TeacherCache> {
    let layers = propagate(graph, teacher_base, cfg.layers, cfg.norm_mode)?;
    build_teacher_cache(&layers, graph.num_users(), &layer_weights(cfg), cfg.top_r)
}

/// Student objective for a config and cache.
pub fn student_objective<'a>(
    graph: &'a InteractionGraph,
    cfg: &TrainingConfig,
    weights: &'a LayerWeights,
    cache: &'a TeacherCache,
    rank_weights: &'a [f64],
) -> Objective<'a> {
    Objective {
        graph,
        weights,
        norm_mode: cfg.norm_mode,
        l2: cfg.l2,
        quantization: Quantization::Sign {
            estimator: cfg.estimator,
            gamma: cfg.gamma,
        },
        distillation: Some(Distillation { cache, rank_weights }),
    }
}

/// Warm-starts from the teacher base and trains the binarized student.
/// Returns the deployable table and the final latent base embeddings.
pub fn train_student(
    graph: &InteractionGraph,
    teacher_base: &DenseTable,
    cache: &TeacherCache,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(BinarizedTable, DenseTable)> {
    cfg.validate()?;
    if cache.num_layers() != cfg.layers + 1 {
        return Err(Error::Input(format!(
            "cache has {} layers but config asks for L={} ({} layers)",
            cache.num_layers(),
            cfg.layers,
            cfg.layers + 1
        )));
    }
    cache.check_shape(graph.num_users(), cfg.layers + 1, graph.num_items())?;
    if teacher_base.rows() != graph.num_nodes() || teacher_base.dim() != cfg.dim {
        return Err(Error::Input(format!(
            "teacher table is {}x{}, expected {}x{}",
            teacher_base.rows(),
            teacher_base.dim(),
            graph.num_nodes(),
            cfg.dim
        )));
    }
    let weights = layer_weights(cfg);
    let rank_weights = cfg.rank_weights(cache.r());
    let objective = student_objective(graph, cfg, &weights, cache, &rank_weights);
    let mut base = teacher_base.clone();
    run_epochs(&objective, &mut base, cfg, cfg.epochs_student, streams::STUDENT_SAMPLING, &mut on_epoch)?;
    let layers = propagate(graph, &base, cfg.layers, cfg.norm_mode)?;
    let table = build_tables(&layers, graph.num_users(), &weights)?;
    Ok((table, base))
}
