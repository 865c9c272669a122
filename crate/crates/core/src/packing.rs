use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::bits_for_codes;

/// On-wire layout of code indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IndexPacking {
    /// `ceil(log2(C))` bits per index, LSB-first bit order, zero-padded to a
    /// byte boundary.
    #[default]
    Packed,
    /// One little-endian `u16` per index.
    Byte16,
}

impl IndexPacking {
    pub fn bits_per_index(self, num_codes: usize) -> u32 {
        match self {
            IndexPacking::Packed => bits_for_codes(num_codes),
            IndexPacking::Byte16 => 16,
        }
    }

    /// Bytes needed for `count` indices.
    pub fn packed_len(self, count: usize, num_codes: usize) -> usize {
        (count * self.bits_per_index(num_codes) as usize).div_ceil(8)
    }

    /// Appends the encoding of `indices` to `out`.
    pub fn pack_into(self, indices: &[u32], num_codes: usize, out: &mut Vec<u8>) -> Result<()> {
        if let Some(&index) = indices.iter().find(|&&i| i as usize >= num_codes) {
            return Err(Error::IndexOutOfRange { index, codes: num_codes });
        }
        match self {
            IndexPacking::Packed => pack_bits(indices, bits_for_codes(num_codes), out),
            IndexPacking::Byte16 => {
                for &i in indices {
                    out.extend_from_slice(&(i as u16).to_le_bytes());
                }
            }
        }
        Ok(())
    }

    pub fn pack(self, indices: &[u32], num_codes: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.packed_len(indices.len(), num_codes));
        self.pack_into(indices, num_codes, &mut out)?;
        Ok(out)
    }

    /// Decodes exactly `indices.len()` indices from `bytes`, which must be
    /// exactly `packed_len` long.
    pub fn unpack_into(self, bytes: &[u8], num_codes: usize, indices: &mut [u32]) -> Result<()> {
        let expected = self.packed_len(indices.len(), num_codes);
        if bytes.len() != expected {
            return Err(Error::PackedLength { expected, found: bytes.len() });
        }
        match self {
            IndexPacking::Packed => unpack_bits(bytes, bits_for_codes(num_codes), indices),
            IndexPacking::Byte16 => {
                for (i, pair) in indices.iter_mut().zip(bytes.chunks_exact(2)) {
                    *i = u16::from_le_bytes([pair[0], pair[1]]) as u32;
                }
            }
        }
        if let Some(&index) = indices.iter().find(|&&i| i as usize >= num_codes) {
            return Err(Error::IndexOutOfRange { index, codes: num_codes });
        }
        Ok(())
    }

    pub fn unpack(self, bytes: &[u8], count: usize, num_codes: usize) -> Result<Vec<u32>> {
        let mut indices = alloc::vec![0u32; count];
        self.unpack_into(bytes, num_codes, &mut indices)?;
        Ok(indices)
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexPacking::Packed => "packed",
            IndexPacking::Byte16 => "byte16",
        }
    }
}

fn pack_bits(indices: &[u32], bits: u32, out: &mut Vec<u8>) {
    let mut acc = 0u64;
    let mut filled = 0u32;
    for &index in indices {
        acc |= (index as u64) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
}

fn unpack_bits(bytes: &[u8], bits: u32, indices: &mut [u32]) {
    let mask = (1u64 << bits) - 1;
    let mut acc = 0u64;
    let mut filled = 0u32;
    let mut input = bytes.iter();
    for index in indices.iter_mut() {
        while filled < bits {
            // length was checked by the caller
            acc |= (*input.next().unwrap() as u64) << filled;
            filled += 8;
        }
        *index = (acc & mask) as u32;
        acc >>= bits;
        filled -= bits;
    }
}

/// Bit-packs `indices` at `ceil(log2(C))` bits each.
pub fn pack_indices(indices: &[u32], num_codes: usize) -> Result<Vec<u8>> {
    IndexPacking::Packed.pack(indices, num_codes)
}

/// Inverse of [`pack_indices`].
pub fn unpack_indices(bytes: &[u8], count: usize, num_codes: usize) -> Result<Vec<u32>> {
    IndexPacking::Packed.unpack(bytes, count, num_codes)
}
