//! Binary file formats.
//!
//! Every file starts with a 4-byte magic and a `u16` version and ends with a
//! `u32` CRC32 (IEEE) over all bytes before it. Readers verify the checksum
//! before interpreting any field, so a damaged file is always reported as
//! such rather than as a confusing header error.

mod dump;
mod index_block;
mod quantizer_file;
mod snapshot;

use std::fs;
use std::path::Path;

use rvq_core::{Grouping, IndexPacking, QuantizerGeometry};

use crate::error::FormatError;

pub use dump::{read_activation_dump, write_activation_dump, DType, DumpHeader, DumpReader, DumpWriter};
pub use index_block::PackedIndexBlock;
pub use quantizer_file::{load_quantizer, quantizer_from_bytes, quantizer_to_bytes, save_quantizer};
pub use snapshot::{load_snapshot, save_snapshot, snapshot_from_bytes, snapshot_to_bytes};

pub(crate) const CHECKSUM_LEN: usize = 4;

/// Little-endian byte builder.
#[derive(Debug, Default)]
pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn with_header(magic: &[u8; 4], version: u16) -> Self {
        let mut e = Self::default();
        e.bytes(magic);
        e.u16(version);
        e
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn geometry(&mut self, g: &QuantizerGeometry) {
        for v in [g.dim(), g.code_dim(), g.num_codebooks(), g.num_codes()] {
            self.u32(v as u32);
        }
    }

    /// Appends the CRC32 of everything written so far.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

/// Cursor over a verified body.
#[derive(Debug)]
pub(crate) struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Length(format!(
                "needed {n} more bytes at offset {}, only {} remain",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn geometry(&mut self) -> Result<QuantizerGeometry, FormatError> {
        let d = self.u32()? as usize;
        let d_hat = self.u32()? as usize;
        let k = self.u32()? as usize;
        let c = self.u32()? as usize;
        QuantizerGeometry::new(d, d_hat, k, c).map_err(|e| FormatError::Field(e.to_string()))
    }

    pub fn grouping(&mut self) -> Result<Grouping, FormatError> {
        grouping_from_tag(self.u8()?)
    }

    pub fn packing(&mut self) -> Result<IndexPacking, FormatError> {
        packing_from_tag(self.u8()?)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Errors unless every byte was consumed.
    pub fn finish(self) -> Result<(), FormatError> {
        if self.remaining() != 0 {
            return Err(FormatError::Length(format!("{} unexpected trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Checks the trailing checksum, then magic and version. Returns a decoder
/// positioned just after the version field and ending before the checksum.
pub(crate) fn open_verified<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    version: u16,
    format: &'static str,
) -> Result<Decoder<'a>, FormatError> {
    if bytes.len() < 6 + CHECKSUM_LEN {
        return Err(FormatError::Length(format!("{format} file of {} bytes is too short", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    let found: [u8; 4] = body[..4].try_into().unwrap();
    if &found != magic {
        return Err(FormatError::Magic { format, found });
    }
    let found_version = u16::from_le_bytes([body[4], body[5]]);
    if found_version != version {
        return Err(FormatError::Version { format, found: found_version, expected: version });
    }
    Ok(Decoder { buf: body, pos: 6 })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    Ok(fs::read(path)?)
}

pub(crate) fn grouping_tag(g: Grouping) -> u8 {
    match g {
        Grouping::Contiguous => 0,
        Grouping::Strided => 1,
    }
}

pub(crate) fn grouping_from_tag(tag: u8) -> Result<Grouping, FormatError> {
    match tag {
        0 => Ok(Grouping::Contiguous),
        1 => Ok(Grouping::Strided),
        t => Err(FormatError::Field(format!("unknown grouping tag {t}"))),
    }
}

pub(crate) fn packing_tag(p: IndexPacking) -> u8 {
    match p {
        IndexPacking::Packed => 0,
        IndexPacking::Byte16 => 1,
    }
}

pub(crate) fn packing_from_tag(tag: u8) -> Result<IndexPacking, FormatError> {
    match tag {
        0 => Ok(IndexPacking::Packed),
        1 => Ok(IndexPacking::Byte16),
        t => Err(FormatError::Field(format!("unknown packing tag {t}"))),
    }
}
