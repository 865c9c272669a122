use alloc::format;

use crate::error::{Error, Result};

/// Largest codebook size. Keeps every index representable in 16 bits.
pub const MAX_CODES: usize = 1 << 16;

/// Shape of a residual quantizer.
///
/// `dim` channels are split into `dim / code_dim` groups; each group is encoded
/// with `num_codebooks` stages of `num_codes` codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizerGeometry {
    dim: usize,
    code_dim: usize,
    num_codebooks: usize,
    num_codes: usize,
}

impl QuantizerGeometry {
    pub fn new(dim: usize, code_dim: usize, num_codebooks: usize, num_codes: usize) -> Result<Self> {
        if code_dim == 0 || num_codebooks == 0 || num_codes == 0 || dim == 0 {
            return Err(Error::InvalidGeometry(format!(
                "all sizes must be positive (d={dim}, d_hat={code_dim}, K={num_codebooks}, C={num_codes})"
            )));
        }
        if !dim.is_multiple_of(code_dim) {
            return Err(Error::InvalidGeometry(format!("d={dim} is not a multiple of d_hat={code_dim}")));
        }
        if num_codes > MAX_CODES {
            return Err(Error::InvalidGeometry(format!("C={num_codes} exceeds the maximum of {MAX_CODES}")));
        }
        Ok(Self { dim, code_dim, num_codebooks, num_codes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn code_dim(&self) -> usize {
        self.code_dim
    }

    pub fn num_codebooks(&self) -> usize {
        self.num_codebooks
    }

    pub fn num_codes(&self) -> usize {
        self.num_codes
    }

    /// Number of channel groups, `d / d_hat`.
    pub fn groups(&self) -> usize {
        self.dim / self.code_dim
    }

    /// Code indices stored per vector: one per (group, stage).
    pub fn indices_per_vector(&self) -> usize {
        self.groups() * self.num_codebooks
    }

    /// `ceil(log2(C))`, never less than one.
    pub fn bits_per_index(&self) -> u32 {
        bits_for_codes(self.num_codes)
    }
}

impl Default for QuantizerGeometry {
    /// d=128, d_hat=32, K=8, C=2048.
    fn default() -> Self {
        Self { dim: 128, code_dim: 32, num_codebooks: 8, num_codes: 2048 }
    }
}

pub(crate) fn bits_for_codes(num_codes: usize) -> u32 {
    if num_codes <= 2 {
        1
    } else {
        usize::BITS - (num_codes - 1).leading_zeros()
    }
}
