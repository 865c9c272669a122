//! `RVQI` packed index blocks: the encoded form of a sequence of vectors.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "RVQI"
//! 4       2        version (1)
//! 6       4 x u32  d, d_hat, K, C
//! 22      1        grouping
//! 23      1        packing (0 packed, 1 byte16)
//! 24      8        token count n (u64)
//! 32      n * r    records: f16 std scale (LE) then the packed indices
//! end-4   4        CRC32 of all preceding bytes
//! ```
//!
//! With `packed`, a record holds `ceil(g*K*b / 8)` index bytes where
//! `b = ceil(log2 C)`; indices are group-major, stage-minor, LSB first.

use std::fs;
use std::path::Path;

use rvq_core::{f16, Grouping, IndexPacking, QuantizedVector, QuantizerGeometry, ResidualQuantizer};

use super::{grouping_tag, open_verified, packing_tag, read_file, Encoder};
use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"RVQI";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct PackedIndexBlock {
    geometry: QuantizerGeometry,
    grouping: Grouping,
    packing: IndexPacking,
    stds: Vec<f16>,
    packed: Vec<u8>,
}

impl PackedIndexBlock {
    pub fn new(geometry: QuantizerGeometry, grouping: Grouping, packing: IndexPacking) -> Self {
        Self { geometry, grouping, packing, stds: Vec::new(), packed: Vec::new() }
    }

    /// Empty block matching a quantizer.
    pub fn for_quantizer(q: &ResidualQuantizer, packing: IndexPacking) -> Self {
        Self::new(*q.geometry(), q.grouping(), packing)
    }

    pub fn geometry(&self) -> &QuantizerGeometry {
        &self.geometry
    }

    pub fn grouping(&self) -> Grouping {
        self.grouping
    }

    pub fn packing(&self) -> IndexPacking {
        self.packing
    }

    pub fn len(&self) -> usize {
        self.stds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stds.is_empty()
    }

    /// Index bytes per token.
    pub fn record_index_bytes(&self) -> usize {
        self.packing.packed_len(self.geometry.indices_per_vector(), self.geometry.num_codes())
    }

    pub fn push(&mut self, q: &QuantizedVector) -> Result<(), FormatError> {
        if q.indices().len() != self.geometry.indices_per_vector() {
            return Err(FormatError::GeometryMismatch(format!(
                "vector has {} indices, block expects {}",
                q.indices().len(),
                self.geometry.indices_per_vector()
            )));
        }
        self.packing.pack_into(q.indices(), self.geometry.num_codes(), &mut self.packed)?;
        self.stds.push(q.std_scale());
        Ok(())
    }

    pub fn get(&self, position: usize) -> Result<QuantizedVector, FormatError> {
        if position >= self.len() {
            return Err(rvq_core::Error::PositionOutOfRange { position, len: self.len() }.into());
        }
        let r = self.record_index_bytes();
        let indices = self.packing.unpack(
            &self.packed[position * r..(position + 1) * r],
            self.geometry.indices_per_vector(),
            self.geometry.num_codes(),
        )?;
        Ok(QuantizedVector::new(self.stds[position], indices))
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<QuantizedVector, FormatError>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Errors unless `q` can decode this block.
    pub fn check_quantizer(&self, q: &ResidualQuantizer) -> Result<(), FormatError> {
        if q.geometry() != &self.geometry || q.grouping() != self.grouping {
            return Err(FormatError::GeometryMismatch(format!(
                "block was encoded with {:?} ({}), quantizer is {:?} ({})",
                self.geometry,
                self.grouping.name(),
                q.geometry(),
                q.grouping().name()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::with_header(MAGIC, VERSION);
        e.geometry(&self.geometry);
        e.u8(grouping_tag(self.grouping));
        e.u8(packing_tag(self.packing));
        e.u64(self.len() as u64);
        let r = self.record_index_bytes();
        for (std, record) in self.stds.iter().zip(self.packed.chunks_exact(r.max(1))) {
            e.u16(std.to_bits());
            e.bytes(record);
        }
        e.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut d = open_verified(bytes, MAGIC, VERSION, "index block")?;
        let geometry = d.geometry()?;
        let grouping = d.grouping()?;
        let packing = d.packing()?;
        let count = d.u64()?;
        let mut block = Self::new(geometry, grouping, packing);
        let r = block.record_index_bytes();
        let expected = (count as u128) * (r as u128 + 2);
        if d.remaining() as u128 != expected {
            return Err(FormatError::Length(format!(
                "{count} records of {} bytes need {expected} bytes, found {}",
                r + 2,
                d.remaining()
            )));
        }
        let count = count as usize;
        block.stds.reserve(count);
        block.packed.reserve(count * r);
        for _ in 0..count {
            let std = f16::from_bits(d.u16()?);
            if !std.is_finite() || std.to_f32() < 0.0 {
                return Err(FormatError::Field(format!("invalid std scale {std}")));
            }
            block.stds.push(std);
            let record = d.take(r)?;
            // validates every index against C
            packing
                .unpack(record, geometry.indices_per_vector(), geometry.num_codes())
                .map_err(|e| FormatError::Field(e.to_string()))?;
            block.packed.extend_from_slice(record);
        }
        d.finish()?;
        debug_assert_eq!(bytes.len(), HEADER_LEN + count * (r + 2) + 4);
        Ok(block)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}
