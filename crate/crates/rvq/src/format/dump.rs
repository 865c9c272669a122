//! `RVQA` activation dumps, read and written as streams.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "RVQA"
//! 4       2           version (1)
//! 6       4           d (u32)
//! 10      8           count (u64)
//! 18      1           dtype (0 f32, 1 f16)
//! 19      n*d*size    row-major vectors, little-endian
//! end-4   4           CRC32 of all preceding bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use rvq_core::f16;

use super::CHECKSUM_LEN;
use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"RVQA";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 19;
const FORMAT: &str = "activation dump";
const BUF_LEN: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DType {
    #[default]
    F32,
    F16,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F16 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F16),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F16 => "f16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub dim: usize,
    pub count: u64,
    pub dtype: DType,
}

impl DumpHeader {
    pub fn payload_len(&self) -> u128 {
        self.count as u128 * self.dim as u128 * self.dtype.size() as u128
    }

    pub fn file_len(&self) -> u128 {
        HEADER_LEN as u128 + self.payload_len() + CHECKSUM_LEN as u128
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        out[4..6].copy_from_slice(&VERSION.to_le_bytes());
        out[6..10].copy_from_slice(&(self.dim as u32).to_le_bytes());
        out[10..18].copy_from_slice(&self.count.to_le_bytes());
        out[18] = self.dtype.tag();
        out
    }
}

/// Writes a dump whose vector count is fixed up front.
#[derive(Debug)]
pub struct DumpWriter {
    out: BufWriter<File>,
    hasher: crc32fast::Hasher,
    header: DumpHeader,
    written: u64,
    row: Vec<u8>,
}

impl DumpWriter {
    pub fn create(path: impl AsRef<Path>, dim: usize, count: u64, dtype: DType) -> Result<Self, FormatError> {
        if dim == 0 || u32::try_from(dim).is_err() {
            return Err(FormatError::Field(format!("dimension {dim} does not fit the dump header")));
        }
        let header = DumpHeader { dim, count, dtype };
        let mut w = Self {
            out: BufWriter::with_capacity(BUF_LEN, File::create(path)?),
            hasher: crc32fast::Hasher::new(),
            header,
            written: 0,
            row: Vec::with_capacity(dim * dtype.size()),
        };
        let bytes = header.to_bytes();
        w.emit(&bytes)?;
        Ok(w)
    }

    pub fn header(&self) -> DumpHeader {
        self.header
    }

    fn emit(&mut self, bytes: &[u8]) -> Result<(), FormatError> {
        self.hasher.update(bytes);
        self.out.write_all(bytes)?;
        Ok(())
    }

    pub fn write(&mut self, x: &[f32]) -> Result<(), FormatError> {
        if x.len() != self.header.dim {
            return Err(rvq_core::Error::DimensionMismatch { expected: self.header.dim, found: x.len() }.into());
        }
        if self.written == self.header.count {
            return Err(FormatError::Length(format!("dump declared {} vectors", self.header.count)));
        }
        let mut row = std::mem::take(&mut self.row);
        row.clear();
        match self.header.dtype {
            DType::F32 => x.iter().for_each(|v| row.extend_from_slice(&v.to_le_bytes())),
            DType::F16 => x.iter().for_each(|v| row.extend_from_slice(&f16::from_f32(*v).to_bits().to_le_bytes())),
        }
        let result = self.emit(&row);
        self.row = row;
        result?;
        self.written += 1;
        Ok(())
    }

    /// Appends the checksum and flushes. Fails if fewer vectors than
    /// declared were written.
    pub fn finish(mut self) -> Result<DumpHeader, FormatError> {
        if self.written != self.header.count {
            return Err(FormatError::Length(format!(
                "dump declared {} vectors but {} were written",
                self.header.count, self.written
            )));
        }
        let crc = self.hasher.clone().finalize();
        self.out.write_all(&crc.to_le_bytes())?;
        self.out.flush()?;
        Ok(self.header)
    }
}

/// Streaming dump reader. Opening checks the file length against the header
/// and the checksum over the whole file before any vector is returned, so
/// memory use stays at one buffer regardless of the file size.
#[derive(Debug)]
pub struct DumpReader {
    input: BufReader<File>,
    header: DumpHeader,
    read: u64,
    hasher: crc32fast::Hasher,
    expected_crc: u32,
    row: Vec<u8>,
}

impl DumpReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        let mut file = File::open(path)?;
        let len = file.metadata()?.len();
        if len < (HEADER_LEN + CHECKSUM_LEN) as u64 {
            return Err(FormatError::Length(format!("{FORMAT} of {len} bytes is too short")));
        }
        let mut head = [0u8; HEADER_LEN];
        file.read_exact(&mut head)?;
        let dim = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(head[10..18].try_into().unwrap());
        let dtype = DType::from_tag(head[18]);
        if let Some(dtype) = dtype {
            let header = DumpHeader { dim, count, dtype };
            if header.file_len() != len as u128 {
                return Err(FormatError::Length(format!(
                    "{FORMAT} header declares {count} x {dim} {} values ({} bytes in total), file has {len} bytes",
                    dtype.name(),
                    header.file_len()
                )));
            }
        }

        file.seek(SeekFrom::Start(0))?;
        let mut hasher = crc32fast::Hasher::new();
        let mut remaining = len - CHECKSUM_LEN as u64;
        let mut buf = vec![0u8; BUF_LEN];
        while remaining > 0 {
            let n = remaining.min(BUF_LEN as u64) as usize;
            file.read_exact(&mut buf[..n])?;
            hasher.update(&buf[..n]);
            remaining -= n as u64;
        }
        let mut tail = [0u8; CHECKSUM_LEN];
        file.read_exact(&mut tail)?;
        let stored = u32::from_le_bytes(tail);
        let computed = hasher.finalize();
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }

        let found: [u8; 4] = head[..4].try_into().unwrap();
        if &found != MAGIC {
            return Err(FormatError::Magic { format: FORMAT, found });
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != VERSION {
            return Err(FormatError::Version { format: FORMAT, found: version, expected: VERSION });
        }
        let dtype = dtype.ok_or_else(|| FormatError::Field(format!("unknown dtype tag {}", head[18])))?;
        if dim == 0 {
            return Err(FormatError::Field("dimension 0".into()));
        }

        file.seek(SeekFrom::Start(HEADER_LEN as u64))?;
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&head);
        Ok(Self {
            input: BufReader::with_capacity(BUF_LEN, file),
            header: DumpHeader { dim, count, dtype },
            read: 0,
            hasher,
            expected_crc: stored,
            row: vec![0; dim * dtype.size()],
        })
    }

    pub fn header(&self) -> DumpHeader {
        self.header
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn remaining(&self) -> u64 {
        self.header.count - self.read
    }

    /// Reads the next vector into `out`; `Ok(false)` at the end. The checksum
    /// is verified again on the bytes actually read, so a file modified after
    /// opening is still caught at the last vector.
    pub fn next_into(&mut self, out: &mut [f32]) -> Result<bool, FormatError> {
        if out.len() != self.header.dim {
            return Err(rvq_core::Error::DimensionMismatch { expected: self.header.dim, found: out.len() }.into());
        }
        if self.read == self.header.count {
            return Ok(false);
        }
        self.input.read_exact(&mut self.row).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => FormatError::Length(format!("{FORMAT} ended early")),
            _ => e.into(),
        })?;
        self.hasher.update(&self.row);
        match self.header.dtype {
            DType::F32 => {
                for (o, b) in out.iter_mut().zip(self.row.chunks_exact(4)) {
                    *o = f32::from_le_bytes(b.try_into().unwrap());
                }
            }
            DType::F16 => {
                for (o, b) in out.iter_mut().zip(self.row.chunks_exact(2)) {
                    *o = f16::from_bits(u16::from_le_bytes([b[0], b[1]])).to_f32();
                }
            }
        }
        self.read += 1;
        if self.read == self.header.count {
            let computed = self.hasher.clone().finalize();
            if computed != self.expected_crc {
                return Err(FormatError::Checksum { stored: self.expected_crc, computed });
            }
        }
        Ok(true)
    }
}

impl Iterator for DumpReader {
    type Item = Result<Vec<f32>, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut out = vec![0.0; self.header.dim];
        match self.next_into(&mut out) {
            Ok(true) => Some(Ok(out)),
            Ok(false) => None,
            Err(e) => {
                self.read = self.header.count;
                Some(Err(e))
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining()).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

pub fn read_activation_dump(path: impl AsRef<Path>) -> Result<DumpReader, FormatError> {
    DumpReader::open(path)
}

/// Writes all of `vectors` as one dump of dimension `dim`.
pub fn write_activation_dump<V: AsRef<[f32]>>(
    path: impl AsRef<Path>,
    dim: usize,
    dtype: DType,
    vectors: &[V],
) -> Result<DumpHeader, FormatError> {
    let mut w = DumpWriter::create(path, dim, vectors.len() as u64, dtype)?;
    for v in vectors {
        w.write(v.as_ref())?;
    }
    w.finish()
}
