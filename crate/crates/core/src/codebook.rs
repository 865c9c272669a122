use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Squared Euclidean distance in single precision.
///
/// Accumulates into eight fixed lanes (channel `c` goes to lane `c % 8`) and
/// reduces the lanes pairwise, so the result is identical on every platform.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for l in 0..8 {
            let d = x[l] - y[l];
            lanes[l] += d * d;
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        let d = x - y;
        lanes[l] += d * d;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
}

/// One stage of a residual quantizer: `len()` codes of `code_dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    code_dim: usize,
    entries: Vec<f32>,
}

impl Codebook {
    /// Builds a codebook from code-major entries.
    pub fn new(code_dim: usize, entries: Vec<f32>) -> Result<Self> {
        if code_dim == 0 || entries.is_empty() || !entries.len().is_multiple_of(code_dim) {
            return Err(Error::InvalidCodebook(format!(
                "{} values do not form codes of dimension {code_dim}",
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { code_dim, entries })
    }

    pub fn zeros(num_codes: usize, code_dim: usize) -> Self {
        assert!(num_codes > 0 && code_dim > 0);
        Self { code_dim, entries: vec![0.0; num_codes * code_dim] }
    }

    pub fn len(&self) -> usize {
        self.entries.len() / self.code_dim
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    #[inline]
    pub fn entry(&self, index: usize) -> &[f32] {
        &self.entries[index * self.code_dim..(index + 1) * self.code_dim]
    }

    pub(crate) fn entry_mut(&mut self, index: usize) -> &mut [f32] {
        &mut self.entries[index * self.code_dim..(index + 1) * self.code_dim]
    }

    /// All values, code-major.
    pub fn as_slice(&self) -> &[f32] {
        &self.entries
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.entries.chunks_exact(self.code_dim)
    }

    /// Index of the code closest to `z` and its squared distance.
    /// Exact ties go to the lowest index.
    #[inline]
    pub fn nearest(&self, z: &[f32]) -> (u32, f32) {
        let mut best = 0u32;
        let mut best_dist = f32::INFINITY;
        for (j, code) in self.iter().enumerate() {
            let dist = squared_distance(z, code);
            if dist < best_dist {
                best_dist = dist;
                best = j as u32;
            }
        }
        (best, best_dist)
    }
}
