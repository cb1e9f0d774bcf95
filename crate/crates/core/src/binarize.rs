//! Layer-wise 1-bit quantization: sign codes with mean-|v| scalers, bit
//! packing, and the `BGR1` model file.
//!
//! Packing convention: bit `k` lives in word `k / 64` at bit position `k % 64`;
//! `+1` is stored as 1 and `-1` as 0. Padding bits past `d` are always 0.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::propagation::{DenseTable, LayerOutputs};
use crate::scoring::LayerWeights;

pub const WORD_BITS: usize = 64;
const MODEL_MAGIC: &[u8; 4] = b"BGR1";
const MODEL_VERSION: u32 = 1;

/// Number of 64-bit words needed for `d` bits.
pub fn words_for(d: usize) -> usize {
    d.div_ceil(WORD_BITS)
}

/// Sign with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Sign vector and mean absolute value of `v`.
pub fn binarize_vector(v: &[f64]) -> (Vec<i8>, f64) {
    let signs = v.iter().map(|&x| sign(x)).collect();
    let alpha = if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    };
    (signs, alpha)
}

/// Binarizes every row of a layer. Returns row-major signs and one scaler per row.
pub fn binarize_layer(layer: &DenseTable) -> (Vec<i8>, Vec<f64>) {
    let mut signs = Vec::with_capacity(layer.rows() * layer.dim());
    let mut scalers = Vec::with_capacity(layer.rows());
    for r in 0..layer.rows() {
        let (s, a) = binarize_vector(layer.row(r));
        signs.extend(s);
        scalers.push(a);
    }
    (signs, scalers)
}

/// Sign bits packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PackedBits {
    words: Vec<u64>,
    bit_len: usize,
}

impl PackedBits {
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    /// Wraps raw words, rejecting set padding bits.
    pub fn from_words(words: Vec<u64>, bit_len: usize) -> Result<Self> {
        if words.len() != words_for(bit_len) {
            return Err(Error::Dimension(format!(
                "{} words cannot hold exactly {bit_len} bits",
                words.len()
            )));
        }
        if let Some(&last) = words.last() {
            if last & !tail_mask(bit_len) != 0 {
                return Err(Error::Format("padding bits must be zero".into()));
            }
        }
        Ok(Self { words, bit_len })
    }
}

/// Valid-bit mask for the final word of a `d`-bit code.
#[inline]
pub fn tail_mask(d: usize) -> u64 {
    match d % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

fn pack_into(signs: &[i8], out: &mut [u64]) {
    out.fill(0);
    for (k, &s) in signs.iter().enumerate() {
        if s > 0 {
            out[k / WORD_BITS] |= 1u64 << (k % WORD_BITS);
        }
    }
}

fn pack_f64_into(v: &[f64], out: &mut [u64]) {
    out.fill(0);
    for (k, &x) in v.iter().enumerate() {
        if x >= 0.0 {
            out[k / WORD_BITS] |= 1u64 << (k % WORD_BITS);
        }
    }
}

pub fn pack_bits(signs: &[i8]) -> PackedBits {
    let mut words = vec![0u64; words_for(signs.len())];
    pack_into(signs, &mut words);
    PackedBits {
        words,
        bit_len: signs.len(),
    }
}

pub fn unpack_bits(bits: &PackedBits) -> Vec<i8> {
    unpack_words(&bits.words, bits.bit_len)
}

pub(crate) fn unpack_words(words: &[u64], d: usize) -> Vec<i8> {
    (0..d)
        .map(|k| {
            if (words[k / WORD_BITS] >> (k % WORD_BITS)) & 1 == 1 {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// The deployable model: per node and layer, a scaler and a packed sign code.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedTable {
    num_users: usize,
    num_items: usize,
    dim: usize,
    num_layers: usize,
    words_per_code: usize,
    /// `[node][layer]`
    scalers: Vec<f32>,
    /// `[node][layer][word]`
    codes: Vec<u64>,
    weights: LayerWeights,
}

impl BinarizedTable {
    /// Assembles a table from raw parts; `scalers` is `[node][layer]` and
    /// `codes` is `[node][layer][word]`.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        dim: usize,
        scalers: Vec<f32>,
        codes: Vec<u64>,
        weights: LayerWeights,
    ) -> Result<Self> {
        let num_layers = weights.len();
        let nodes = num_users + num_items;
        let wpc = words_for(dim);
        if dim == 0 {
            return Err(Error::Dimension("zero dimension".into()));
        }
        if scalers.len() != nodes * num_layers || codes.len() != nodes * num_layers * wpc {
            return Err(Error::Dimension(format!(
                "expected {} scalers and {} code words",
                nodes * num_layers,
                nodes * num_layers * wpc
            )));
        }
        if scalers.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Format("scalers must be finite and non-negative".into()));
        }
        let mask = tail_mask(dim);
        if codes.chunks(wpc).any(|c| c[wpc - 1] & !mask != 0) {
            return Err(Error::Format("padding bits must be zero".into()));
        }
        Ok(Self {
            num_users,
            num_items,
            dim,
            num_layers,
            words_per_code: wpc,
            scalers,
            codes,
            weights,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L + 1`.
    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn weights(&self) -> &LayerWeights {
        &self.weights
    }

    pub fn scaler(&self, node: usize, layer: usize) -> f32 {
        self.scalers[node * self.num_layers + layer]
    }

    /// All scalers of a node, one per layer.
    pub fn node_scalers(&self, node: usize) -> &[f32] {
        &self.scalers[node * self.num_layers..(node + 1) * self.num_layers]
    }

    pub fn code(&self, node: usize, layer: usize) -> &[u64] {
        let start = (node * self.num_layers + layer) * self.words_per_code;
        &self.codes[start..start + self.words_per_code]
    }

    /// All code words of a node, layer-major.
    pub fn node_codes(&self, node: usize) -> &[u64] {
        let len = self.num_layers * self.words_per_code;
        &self.codes[node * len..(node + 1) * len]
    }

    pub fn packed(&self, node: usize, layer: usize) -> PackedBits {
        PackedBits {
            words: self.code(node, layer).to_vec(),
            bit_len: self.dim,
        }
    }

    pub fn user_node(&self, u: usize) -> usize {
        u
    }

    pub fn item_node(&self, i: usize) -> usize {
        self.num_users + i
    }

    /// Byte size of the serialized model.
    pub fn serialized_len(&self) -> usize {
        28 + self.num_nodes() * self.num_layers * (4 + 8 * self.words_per_code) + 4 * self.num_layers
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.serialized_len());
        buf.extend_from_slice(MODEL_MAGIC);
        for v in [
            MODEL_VERSION,
            self.num_users as u32,
            self.num_items as u32,
            self.dim as u32,
            (self.num_layers - 1) as u32,
            WORD_BITS as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for node in 0..self.num_nodes() {
            for &a in self.node_scalers(node) {
                buf.extend_from_slice(&a.to_le_bytes());
            }
            for &word in self.node_codes(node) {
                buf.extend_from_slice(&word.to_le_bytes());
            }
        }
        for &wl in self.weights.as_slice() {
            buf.extend_from_slice(&(wl as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes);
        if cur.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a BGR1 model (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let m = cur.u32()? as usize;
        let n = cur.u32()? as usize;
        let d = cur.u32()? as usize;
        let num_layers = cur.u32()? as usize + 1;
        let word_bits = cur.u32()? as usize;
        if word_bits != WORD_BITS {
            return Err(Error::Format(format!("unsupported word width {word_bits}")));
        }
        let wpc = words_for(d);
        let nodes = m + n;
        let expected = 28 + nodes * num_layers * (4 + 8 * wpc) + 4 * num_layers;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "model is {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let mut scalers = Vec::with_capacity(nodes * num_layers);
        let mut codes = Vec::with_capacity(nodes * num_layers * wpc);
        for _ in 0..nodes {
            for _ in 0..num_layers {
                scalers.push(cur.f32()?);
            }
            for _ in 0..num_layers * wpc {
                codes.push(cur.u64()?);
            }
        }
        let weights = (0..num_layers)
            .map(|_| cur.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(m, n, d, scalers, codes, LayerWeights::new(weights)?)
    }
}

/// Binarizes every layer of every node.
pub fn build_tables(
    layers: &LayerOutputs,
    num_users: usize,
    weights: &LayerWeights,
) -> Result<BinarizedTable> {
    let num_layers = layers.layers.len();
    if weights.len() != num_layers {
        return Err(Error::Dimension(format!(
            "{} layer weights for {num_layers} layers",
            weights.len()
        )));
    }
    let rows = layers.layers[0].rows();
    let d = layers.dim();
    let wpc = words_for(d);
    let mut scalers = vec![0f32; rows * num_layers];
    let mut codes = vec![0u64; rows * num_layers * wpc];
    for (l, layer) in layers.layers.iter().enumerate() {
        for node in 0..rows {
            let v = layer.row(node);
            let alpha = v.iter().map(|x| x.abs()).sum::<f64>() / d as f64;
            scalers[node * num_layers + l] = alpha as f32;
            let start = (node * num_layers + l) * wpc;
            pack_f64_into(v, &mut codes[start..start + wpc]);
        }
    }
    BinarizedTable::from_parts(num_users, rows - num_users, d, scalers, codes, weights.clone())
}

pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
