//! Binarized graph collaborative filtering.
//!
//! Pipeline: pre-train full-precision user/item embeddings with light graph
//! convolution under BPR, cache the teacher's per-layer top-R items, train a
//! student whose every layer is quantized to `α·sign(v)` with ranking
//! distillation from the cache, then serve top-K lists from packed sign codes
//! with XNOR + popcount.

pub mod binarize;
pub mod commands;
pub mod error;
pub mod eval;
pub mod graph;
pub mod propagation;
pub mod scoring;
pub mod training;

pub use binarize::{binarize_layer, build_tables, pack_bits, unpack_bits, BinarizedTable, PackedBits};
pub use error::{Error, Result};
pub use eval::{evaluate, ndcg_at_k, recall_at_k, MetricReport};
pub use graph::{load_edge_list, DatasetSplit, EdgeLayout, IdMap, InteractionGraph, LoadedData, NormMode};
pub use propagation::{propagate, propagate_adjoint, DenseTable, LayerOutputs};
pub use scoring::{
    score_binary_bitwise, score_binary_float, score_full, top_k, LayerWeights, ScorePath, Scorer, WeightScheme,
};
pub use training::{pretrain_teacher, train_student, TrainingConfig};
