//! Embedding matrices and the `EMB1` binary container.
//!
//! Layout: `b"EMB1"`, version `u32` (= 1), `n` as `u64`, `d` as `u32`, then
//! `n * d` little-endian `f32` values in row-major order. No padding.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

/// An `n x d` matrix of embedding rows with stable sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    d: usize,
    data: Vec<f32>,
    ids: Vec<u64>,
}

impl EmbeddingSet {
    /// Builds a set from a row-major buffer. Ids default to `0..n`.
    pub fn from_flat(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Shape(format!("n = {n}, d = {d}; both must be >= 1")));
        }
        if data.len() != n * d {
            return Err(Error::Shape(format!(
                "buffer holds {} values, expected {n} x {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self {
            n,
            d,
            data,
            ids: (0..n as u64).collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "row {bad} has {} components, expected {d}",
                rows[bad].len()
            )));
        }
        Self::from_flat(n, d, rows.concat())
    }

    pub fn with_ids(mut self, ids: Vec<u64>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: ids.len(),
            });
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    /// Dot product of two rows accumulated in `f64`.
    pub fn dot(&self, i: usize, j: usize) -> f64 {
        dot_f64(self.row(i), self.row(j))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.d).enumerate() {
            let norm = dot_f64(row, row).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroRow(i));
            }
            for v in row.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Ok(Self {
            data,
            ..self.clone()
        })
    }

    /// Subset of rows in the given order; ids follow the rows.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n: indices.len(),
            d: self.d,
            data,
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Rows as an `n x d` `f64` matrix.
    pub fn to_array(&self) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((self.n, self.d), |(i, j)| {
            f64::from(self.data[i * self.d + j])
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&EMB1_MAGIC);
        out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != EMB1_MAGIC {
            return Err(Error::BadMagic {
                expected: EMB1_MAGIC,
                found: magic,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != EMB1_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let d = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
        let n = usize::try_from(n).map_err(|_| Error::Shape(format!("n = {n} too large")))?;
        let payload = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::Shape(format!("n = {n}, d = {d} overflows")))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != payload {
            return Err(Error::Truncated {
                expected: HEADER_LEN + payload,
                found: bytes.len(),
            });
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::from_flat(n, d, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}
