//! User–item matching scores and top-K selection.
//!
//! Three scoring paths share one definition: the inner product of the
//! concatenated, `w_l`-scaled layer segments, which expands to
//! `Σ_l w_l² ⟨x_u^(l), x_i^(l)⟩`.
//!
//! * `Full` uses the full-precision layer embeddings.
//! * `BinaryFloat` unpacks codes to ±1 floats and takes ordinary dot products.
//! * `Bitwise` uses `2·popcount(xnor(a, b) & mask) − d` per layer.
//!
//! Both binary paths combine the per-layer integer term with the scalers in
//! the same order, so they agree bit-for-bit.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::binarize::{tail_mask, unpack_words, BinarizedTable};
use crate::error::{Error, Result};
use crate::propagation::LayerOutputs;

/// Per-layer segment weights `w_0..w_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights(Vec<f64>);

impl LayerWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Config("layer weights must not be empty".into()));
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config("layer weights must be finite and non-negative".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("at least one layer weight must be positive".into()));
        }
        Ok(Self(w))
    }

    /// Weights from a named scheme for `num_hops` propagation steps.
    pub fn from_scheme(scheme: WeightScheme, num_hops: usize) -> Self {
        let n = num_hops + 1;
        let w = (0..n)
            .map(|l| match scheme {
                WeightScheme::LinearShifted => (l + 1) as f64 / (n * (n + 1) / 2) as f64,
                WeightScheme::Uniform => 1.0 / n as f64,
                WeightScheme::InvRemaining => 1.0 / (n - l) as f64,
                WeightScheme::Exp => 2f64.powi(-((n - l) as i32)),
            })
            .collect();
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `w_l²` for every layer.
    pub fn squared(&self) -> Vec<f64> {
        self.0.iter().map(|w| w * w).collect()
    }

    /// Every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|w| w * c).collect())
    }

    /// `w_l²` as the `f32` values used on the binary paths.
    fn squared_f32(&self) -> Vec<f32> {
        self.0
            .iter()
            .map(|&w| {
                let w = w as f32;
                w * w
            })
            .collect()
    }
}

/// Layer-weight schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `(l+1) / Σ(l'+1)`
    LinearShifted,
    /// `1/(L+1)`
    Uniform,
    /// `1/(L+1-l)`
    InvRemaining,
    /// `2^-(L+1-l)`
    Exp,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_shifted" => Ok(Self::LinearShifted),
            "uniform" => Ok(Self::Uniform),
            "inv_remaining" => Ok(Self::InvRemaining),
            "exp" => Ok(Self::Exp),
            other => Err(Error::Config(format!("unknown wl_scheme {other:?}"))),
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LinearShifted => "linear_shifted",
            Self::Uniform => "uniform",
            Self::InvRemaining => "inv_remaining",
            Self::Exp => "exp",
        })
    }
}

/// Which scoring path to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScorePath {
    Full,
    BinaryFloat,
    Bitwise,
}

impl std::str::FromStr for ScorePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "float" | "binary_float" => Ok(Self::BinaryFloat),
            "bitwise" => Ok(Self::Bitwise),
            other => Err(Error::Config(format!("unknown score path {other:?}"))),
        }
    }
}

impl fmt::Display for ScorePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::BinaryFloat => "float",
            Self::Bitwise => "bitwise",
        })
    }
}

/// `Σ_l w_l² ⟨u_l, i_l⟩` over per-layer vectors.
pub fn score_full(user: &[&[f64]], item: &[&[f64]], w: &LayerWeights) -> f64 {
    user.iter()
        .zip(item)
        .zip(w.as_slice())
        .map(|((a, b), wl)| wl * wl * dot(a, b))
        .sum()
}

/// [`score_full`] on rows of a layer stack.
pub fn score_full_rows(layers: &LayerOutputs, user_row: usize, item_row: usize, w: &LayerWeights) -> f64 {
    layers
        .layers
        .iter()
        .zip(w.as_slice())
        .map(|(t, wl)| wl * wl * dot(t.row(user_row), t.row(item_row)))
        .sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One layer's contribution on the binary paths. `w2_au` is `w_l² · α_u`.
#[inline(always)]
fn combine(w2_au: f32, alpha_i: f32, sign_dot: f32) -> f32 {
    w2_au * alpha_i * sign_dot
}

/// Binary score with codes unpacked to ±1 floats.
pub fn score_binary_float(table: &BinarizedTable, u: usize, i: usize, w: &LayerWeights) -> f32 {
    let (un, inode) = (table.user_node(u), table.item_node(i));
    let d = table.dim();
    let w2 = w.squared_f32();
    let mut score = 0f32;
    for l in 0..table.num_layers() {
        let qu = unpack_words(table.code(un, l), d);
        let qi = unpack_words(table.code(inode, l), d);
        let sd: f32 = qu.iter().zip(&qi).map(|(&a, &b)| a as f32 * b as f32).sum();
        score += combine(w2[l] * table.scaler(un, l), table.scaler(inode, l), sd);
    }
    score
}

/// `popcount(xnor(a, b) & mask)` over one code.
#[inline(always)]
fn xnor_popcount(a: &[u64], b: &[u64], tail: u64) -> u32 {
    let last = a.len() - 1;
    let mut count = 0;
    for k in 0..last {
        count += (!(a[k] ^ b[k])).count_ones();
    }
    count + (!(a[last] ^ b[last]) & tail).count_ones()
}

/// The integer term `2·popcount(xnor(a, b) & mask) − d` for one layer.
pub fn popcount_term(a: &[u64], b: &[u64], d: usize) -> i32 {
    2 * xnor_popcount(a, b, tail_mask(d)) as i32 - d as i32
}

/// Binary score through XNOR and popcount.
pub fn score_binary_bitwise(table: &BinarizedTable, u: usize, i: usize, w: &LayerWeights) -> f32 {
    let (un, inode) = (table.user_node(u), table.item_node(i));
    let d = table.dim();
    let w2 = w.squared_f32();
    let mut score = 0f32;
    for l in 0..table.num_layers() {
        let term = popcount_term(table.code(un, l), table.code(inode, l), d);
        score += combine(w2[l] * table.scaler(un, l), table.scaler(inode, l), term as f32);
    }
    score
}

/// Batch scorer over the whole item catalog for one scoring path.
pub enum Scorer<'a> {
    Full {
        layers: &'a LayerOutputs,
        weights: LayerWeights,
        num_users: usize,
    },
    BinaryFloat {
        table: &'a BinarizedTable,
        weights: LayerWeights,
        /// `[item][layer][bit]` as ±1.
        item_signs: Vec<f32>,
    },
    Bitwise {
        table: &'a BinarizedTable,
        weights: LayerWeights,
    },
}

impl<'a> Scorer<'a> {
    pub fn full(layers: &'a LayerOutputs, weights: LayerWeights, num_users: usize) -> Result<Self> {
        if weights.len() != layers.layers.len() {
            return Err(Error::Dimension("layer weights do not match layer count".into()));
        }
        Ok(Scorer::Full {
            layers,
            weights,
            num_users,
        })
    }

    /// A binary-path scorer using the table's stored layer weights.
    pub fn binary(table: &'a BinarizedTable, path: ScorePath) -> Result<Self> {
        Self::binary_with_weights(table, path, table.weights().clone())
    }

    pub fn binary_with_weights(table: &'a BinarizedTable, path: ScorePath, weights: LayerWeights) -> Result<Self> {
        if weights.len() != table.num_layers() {
            return Err(Error::Dimension("layer weights do not match layer count".into()));
        }
        match path {
            ScorePath::Full => Err(Error::Input(
                "the full path needs full-precision layers, not a binarized table".into(),
            )),
            ScorePath::Bitwise => Ok(Scorer::Bitwise { table, weights }),
            ScorePath::BinaryFloat => {
                let d = table.dim();
                let mut item_signs = Vec::with_capacity(table.num_items() * table.num_layers() * d);
                for i in 0..table.num_items() {
                    for l in 0..table.num_layers() {
                        item_signs.extend(
                            unpack_words(table.code(table.item_node(i), l), d)
                                .into_iter()
                                .map(f32::from),
                        );
                    }
                }
                Ok(Scorer::BinaryFloat {
                    table,
                    weights,
                    item_signs,
                })
            }
        }
    }

    pub fn path(&self) -> ScorePath {
        match self {
            Scorer::Full { .. } => ScorePath::Full,
            Scorer::BinaryFloat { .. } => ScorePath::BinaryFloat,
            Scorer::Bitwise { .. } => ScorePath::Bitwise,
        }
    }

    pub fn num_items(&self) -> usize {
        match self {
            Scorer::Full { layers, num_users, .. } => layers.layers[0].rows() - num_users,
            Scorer::BinaryFloat { table, .. } | Scorer::Bitwise { table, .. } => table.num_items(),
        }
    }

    pub fn num_users(&self) -> usize {
        match self {
            Scorer::Full { num_users, .. } => *num_users,
            Scorer::BinaryFloat { table, .. } | Scorer::Bitwise { table, .. } => table.num_users(),
        }
    }

    /// Scores of user `u` against every item, written into `out`.
    pub fn score_into(&self, u: usize, out: &mut [f32]) {
        assert_eq!(out.len(), self.num_items(), "output length must equal item count");
        match self {
            Scorer::Full {
                layers,
                weights,
                num_users,
            } => {
                let w2 = weights.squared();
                for (i, slot) in out.iter_mut().enumerate() {
                    let row = num_users + i;
                    let mut s = 0f64;
                    for (t, wl2) in layers.layers.iter().zip(&w2) {
                        s += wl2 * dot(t.row(u), t.row(row));
                    }
                    *slot = s as f32;
                }
            }
            Scorer::BinaryFloat {
                table,
                weights,
                item_signs,
            } => {
                let d = table.dim();
                let nl = table.num_layers();
                let un = table.user_node(u);
                let w2 = weights.squared_f32();
                let coef: Vec<f32> = (0..nl).map(|l| w2[l] * table.scaler(un, l)).collect();
                let user_signs: Vec<f32> = (0..nl)
                    .flat_map(|l| unpack_words(table.code(un, l), d).into_iter().map(f32::from))
                    .collect();
                let stride = nl * d;
                for (i, slot) in out.iter_mut().enumerate() {
                    let inode = table.item_node(i);
                    let signs = &item_signs[i * stride..(i + 1) * stride];
                    let mut s = 0f32;
                    for l in 0..nl {
                        let seg = l * d..(l + 1) * d;
                        let sd = dot_f32(&user_signs[seg.clone()], &signs[seg]);
                        s += combine(coef[l], table.scaler(inode, l), sd);
                    }
                    *slot = s;
                }
            }
            Scorer::Bitwise { table, weights } => bitwise_all_items(table, weights, u, out),
        }
    }

    pub fn score_all_items(&self, u: usize) -> Vec<f32> {
        let mut out = vec![0f32; self.num_items()];
        self.score_into(u, &mut out);
        out
    }
}

/// Scores for every item along one path (convenience wrapper around [`Scorer`]).
pub fn score_all_items_binary(table: &BinarizedTable, u: usize, path: ScorePath) -> Result<Vec<f32>> {
    Ok(Scorer::binary(table, path)?.score_all_items(u))
}

/// Dot product with eight independent accumulators so the loop vectorizes.
/// Inputs are ±1, so every partial sum is an exact integer.
#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s: f32 = acc.iter().sum();
    for k in chunks * 8..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn bitwise_all_items(table: &BinarizedTable, weights: &LayerWeights, u: usize, out: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the CPU supports popcnt, checked just above.
            unsafe { bitwise_all_items_popcnt(table, weights, u, out) };
            return;
        }
    }
    bitwise_all_items_generic(table, weights, u, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn bitwise_all_items_popcnt(table: &BinarizedTable, weights: &LayerWeights, u: usize, out: &mut [f32]) {
    bitwise_all_items_generic(table, weights, u, out)
}

#[inline(always)]
fn bitwise_all_items_generic(table: &BinarizedTable, weights: &LayerWeights, u: usize, out: &mut [f32]) {
    let d = table.dim();
    let nl = table.num_layers();
    let wpc = table.words_per_code();
    let tail = tail_mask(d);
    let un = table.user_node(u);
    let w2 = weights.squared_f32();
    let coef: Vec<f32> = (0..nl).map(|l| w2[l] * table.scaler(un, l)).collect();
    let user_codes = table.node_codes(un).to_vec();
    let d2 = d as i32;
    for (i, slot) in out.iter_mut().enumerate() {
        let inode = table.item_node(i);
        let codes = table.node_codes(inode);
        let alphas = table.node_scalers(inode);
        let mut s = 0f32;
        for l in 0..nl {
            let seg = l * wpc..(l + 1) * wpc;
            let pc = xnor_popcount(&user_codes[seg.clone()], &codes[seg], tail) as i32;
            s += combine(coef[l], alphas[l], (2 * pc - d2) as f32);
        }
        *slot = s;
    }
}

/// Scores that can be ranked with a total order.
pub trait RankScore: Copy + Send + Sync {
    fn total_order(&self, other: &Self) -> Ordering;
}

impl RankScore for f32 {
    fn total_order(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

impl RankScore for f64 {
    fn total_order(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

/// Descending score, ties by ascending index.
#[inline]
fn rank_order<T: RankScore>(scores: &[T], a: usize, b: usize) -> Ordering {
    scores[b].total_order(&scores[a]).then(a.cmp(&b))
}

/// The `k` best items not in `exclude`, best first.
pub fn top_k<T: RankScore>(scores: &[T], k: usize, exclude: &[usize]) -> Vec<usize> {
    let mut banned = vec![false; scores.len()];
    for &i in exclude {
        if i < banned.len() {
            banned[i] = true;
        }
    }
    top_k_filtered(scores, k, |i| banned[i])
}

/// [`top_k`] with an arbitrary exclusion predicate.
pub fn top_k_filtered<T: RankScore>(scores: &[T], k: usize, excluded: impl Fn(usize) -> bool) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| !excluded(i)).collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        cand.truncate(k);
    }
    cand.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    cand
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::build_tables;
    use crate::propagation::DenseTable;

    fn w1() -> LayerWeights {
        LayerWeights::new(vec![1.0]).unwrap()
    }

    #[test]
    fn plain_inner_product() {
        let s = score_full(&[&[1.0, 2.0]], &[&[3.0, 4.0]], &w1());
        assert_eq!(s, 11.0);
    }

    #[test]
    fn only_one_layer_weighted() {
        let w = LayerWeights::new(vec![0.0, 0.5, 0.0]).unwrap();
        let u: [&[f64]; 3] = [&[1.0], &[2.0], &[3.0]];
        let i: [&[f64]; 3] = [&[4.0], &[5.0], &[6.0]];
        assert_eq!(score_full(&u, &i, &w), 0.25 * 10.0);
    }

    #[test]
    fn default_weight_schemes() {
        let w = LayerWeights::from_scheme(WeightScheme::LinearShifted, 2);
        assert_eq!(w.as_slice(), &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]);
        let w = LayerWeights::from_scheme(WeightScheme::InvRemaining, 2);
        assert_eq!(w.as_slice(), &[1.0 / 3.0, 0.5, 1.0]);
        let w = LayerWeights::from_scheme(WeightScheme::Exp, 2);
        assert_eq!(w.as_slice(), &[0.125, 0.25, 0.5]);
        let w = LayerWeights::from_scheme(WeightScheme::Uniform, 3);
        assert_eq!(w.as_slice(), &[0.25; 4]);
        assert!(LayerWeights::new(vec![0.0, 0.0]).is_err());
    }

    fn table_from_rows(rows: Vec<Vec<f64>>, num_users: usize) -> BinarizedTable {
        let d = rows[0].len();
        let n = rows.len();
        let t = DenseTable::from_vec(n, d, rows.into_iter().flatten().collect()).unwrap();
        build_tables(&LayerOutputs { layers: vec![t] }, num_users, &w1()).unwrap()
    }

    #[test]
    fn identical_and_complementary_codes() {
        let t = table_from_rows(vec![vec![0.5, -0.5, 1.0], vec![1.0, -2.0, 3.0], vec![-1.0, 2.0, -3.0]], 1);
        let au = t.scaler(0, 0);
        let a1 = t.scaler(2, 0);
        let same = score_binary_float(&t, 0, 0, &w1());
        assert_eq!(same, au * t.scaler(1, 0) * 3.0);
        assert_eq!(score_binary_bitwise(&t, 0, 0, &w1()), same);
        let opp = score_binary_float(&t, 0, 1, &w1());
        assert_eq!(opp, -au * a1 * 3.0);
        assert_eq!(score_binary_bitwise(&t, 0, 1, &w1()), opp);
    }

    #[test]
    fn hand_evaluated_popcount_term() {
        assert_eq!(popcount_term(&[0b101], &[0b011], 3), -1);
        assert_eq!(popcount_term(&[0b101], &[0b101], 3), 3);
    }

    #[test]
    fn top_k_examples() {
        let s = [0.1, 0.9, 0.5];
        assert_eq!(top_k(&s, 2, &[]), vec![1, 2]);
        assert_eq!(top_k(&s, 2, &[1]), vec![2, 0]);
        assert_eq!(top_k(&s, 10, &[0]), vec![1, 2]);
        assert_eq!(top_k(&[0.0, 0.0, 0.0], 2, &[]), vec![0, 1]);
    }

    #[test]
    fn scorer_paths_agree_on_single_item() {
        let t = table_from_rows(vec![vec![0.3, -0.1], vec![-0.2, -0.4]], 1);
        let f = Scorer::binary(&t, ScorePath::BinaryFloat).unwrap().score_all_items(0);
        let b = Scorer::binary(&t, ScorePath::Bitwise).unwrap().score_all_items(0);
        assert_eq!(f, b);
        assert_eq!(f[0], score_binary_float(&t, 0, 0, &w1()));
        assert!(Scorer::binary(&t, ScorePath::Full).is_err());
    }
}
