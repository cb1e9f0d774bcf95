//! Per-user, per-layer pseudo-positive items ranked by the teacher, and the
//! `BGC1` cache file.

use rayon::prelude::*;

use crate::binarize::ByteCursor;
use crate::error::{Error, Result};
use crate::propagation::LayerOutputs;
use crate::scoring::{dot, top_k, LayerWeights};

const CACHE_MAGIC: &[u8; 4] = b"BGC1";
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TeacherCache {
    num_users: usize,
    num_layers: usize,
    r: usize,
    /// `[user][layer][rank]`
    items: Vec<u32>,
}

impl TeacherCache {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// `L + 1`.
    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    /// Items kept per list.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Best-first pseudo-positives of user `u` at layer `l`.
    pub fn list(&self, u: usize, l: usize) -> &[u32] {
        let start = (u * self.num_layers + l) * self.r;
        &self.items[start..start + self.r]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + 4 * self.items.len());
        buf.extend_from_slice(CACHE_MAGIC);
        for v in [CACHE_VERSION, self.num_users as u32, self.num_layers as u32, self.r as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &i in &self.items {
            buf.extend_from_slice(&i.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes);
        if cur.take(4)? != CACHE_MAGIC {
            return Err(Error::Format("not a BGC1 cache (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported cache version {version}")));
        }
        let num_users = cur.u32()? as usize;
        let num_layers = cur.u32()? as usize;
        let r = cur.u32()? as usize;
        let len = num_users * num_layers * r;
        if cur.remaining() != 4 * len {
            return Err(Error::Format("cache length does not match its header".into()));
        }
        let items = (0..len).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            num_users,
            num_layers,
            r,
            items,
        })
    }

    /// Rejects cache entries pointing past `num_items` or a shape mismatch.
    pub fn check_shape(&self, num_users: usize, num_layers: usize, num_items: usize) -> Result<()> {
        if self.num_users != num_users {
            return Err(Error::Input(format!(
                "cache covers {} users, graph has {num_users}",
                self.num_users
            )));
        }
        if self.num_layers != num_layers {
            return Err(Error::Input(format!(
                "cache has {} layers, config implies {num_layers}",
                self.num_layers
            )));
        }
        if self.items.iter().any(|&i| i as usize >= num_items) {
            return Err(Error::Input("cache references items outside the catalog".into()));
        }
        Ok(())
    }
}

/// Ranks all items for every user and layer by the teacher's segment score
/// `⟨w_l v_u^(l), w_l v_i^(l)⟩` and keeps the best `r`.
///
/// `r > num_items` is clamped with a warning.
pub fn build_teacher_cache(
    teacher: &LayerOutputs,
    num_users: usize,
    weights: &LayerWeights,
    r: usize,
) -> Result<TeacherCache> {
    let num_layers = teacher.layers.len();
    if weights.len() != num_layers {
        return Err(Error::Dimension("layer weights do not match teacher layers".into()));
    }
    let num_items = teacher.layers[0].rows() - num_users;
    if r == 0 {
        return Err(Error::Config("R must be positive".into()));
    }
    let r = if r > num_items {
        log::warn!("R={r} exceeds the {num_items} items; clamping");
        num_items
    } else {
        r
    };
    let w2 = weights.squared();
    let per_user: Vec<Vec<u32>> = (0..num_users)
        .into_par_iter()
        .map_init(
            || vec![0f64; num_items],
            |scores, u| {
                let mut out = Vec::with_capacity(num_layers * r);
                for (layer, &wl2) in teacher.layers.iter().zip(&w2) {
                    let vu = layer.row(u);
                    for (i, s) in scores.iter_mut().enumerate() {
                        *s = wl2 * dot(vu, layer.row(num_users + i));
                    }
                    out.extend(top_k(scores, r, &[]).into_iter().map(|i| i as u32));
                }
                out
            },
        )
        .collect();
    Ok(TeacherCache {
        num_users,
        num_layers,
        r,
        items: per_user.into_iter().flatten().collect(),
    })
}
