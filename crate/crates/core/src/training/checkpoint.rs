//! `BGT1` teacher checkpoints: the base embedding table as `f32`.

use crate::binarize::ByteCursor;
use crate::error::{Error, Result};
use crate::propagation::DenseTable;

const TEACHER_MAGIC: &[u8; 4] = b"BGT1";
const TEACHER_VERSION: u32 = 1;

pub fn teacher_to_bytes(base: &DenseTable) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 4 * base.as_slice().len());
    buf.extend_from_slice(TEACHER_MAGIC);
    for v in [TEACHER_VERSION, base.rows() as u32, base.dim() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &x in base.as_slice() {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    buf
}

pub fn teacher_from_bytes(bytes: &[u8]) -> Result<DenseTable> {
    let mut cur = ByteCursor::new(bytes);
    if cur.take(4)? != TEACHER_MAGIC {
        return Err(Error::Format("not a BGT1 checkpoint (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != TEACHER_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let rows = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    if cur.remaining() != 4 * rows * dim {
        return Err(Error::Format("checkpoint length does not match its header".into()));
    }
    let data = (0..rows * dim)
        .map(|_| cur.f32().map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    DenseTable::from_vec(rows, dim, data)
}

/// Rounds every entry to `f32` precision, matching what a checkpoint stores.
pub fn round_to_f32(table: &DenseTable) -> DenseTable {
    let data = table.as_slice().iter().map(|&x| x as f32 as f64).collect();
    DenseTable::from_vec(table.rows(), table.dim(), data).expect("same shape")
}
