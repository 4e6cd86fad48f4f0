//! Binary weight files.
//!
//! Layout (little-endian, no padding): magic `IRW1`, `u32` tensor count, then
//! per tensor `u16` name length, UTF-8 name, `u8` dtype (0 = f32, 1 = f64),
//! `u8` rank, `rank × u32` extents and the raw values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ParamSet, Real, Result, Tensor, TensorError};

pub const WEIGHT_MAGIC: &[u8; 4] = b"IRW1";

pub fn write_weights<T: Real>(params: &ParamSet<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + params.value_count() * T::BYTES);
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for e in params.entries() {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(T::DTYPE);
        out.push(e.dims.len() as u8);
        for &d in &e.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in e.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save_weights<T: Real>(params: &ParamSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&write_weights(params))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(TensorError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a weight file image. Every tensor is returned with its stored
/// extents; values are converted to `T` when the stored dtype differs.
pub fn read_weights<T: Real>(bytes: &[u8]) -> Result<ParamSet<T>> {
    if bytes.len() < 4 || &bytes[..4] != WEIGHT_MAGIC {
        return Err(TensorError::NotWeightFile);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let count = r.u32("tensor count")?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| TensorError::Invalid("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let width = match dtype {
            0 => 4,
            1 => 8,
            other => return Err(TensorError::UnsupportedDtype(other)),
        };
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("extent")? as usize);
        }
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n
            .filter(|&n| n.checked_mul(width).is_some_and(|b| b <= bytes.len()))
            .ok_or(TensorError::Truncated("values"))?;
        let raw = r.take(n * width, "values")?;
        let values: Vec<T> = if dtype == 0 {
            raw.chunks_exact(4).map(|c| T::from_f64(f32::read_le(c) as f64)).collect()
        } else {
            raw.chunks_exact(8).map(|c| T::from_f64(f64::read_le(c))).collect()
        };
        let shape = match dims.len() {
            0 => [1, 1, 1, 1],
            1 => [dims[0], 1, 1, 1],
            2 => [dims[0], dims[1], 1, 1],
            3 => [dims[0], dims[1], dims[2], 1],
            4 => [dims[0], dims[1], dims[2], dims[3]],
            _ => return Err(TensorError::Invalid(format!("rank {rank} exceeds 4 for {name}"))),
        };
        set.push(name, dims, Tensor::from_vec(shape, values)?)?;
    }
    if r.pos != bytes.len() {
        return Err(TensorError::Invalid(format!("{} trailing bytes after last tensor", bytes.len() - r.pos)));
    }
    Ok(set)
}

pub fn load_weights<T: Real>(path: impl AsRef<Path>) -> Result<ParamSet<T>> {
    read_weights(&fs::read(path)?)
}
