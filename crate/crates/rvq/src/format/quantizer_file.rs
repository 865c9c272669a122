//! `RVQC` quantizer files.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "RVQC"
//! 4       2             version (1)
//! 6       4 x u32       d, d_hat, K, C
//! 22      1             grouping (0 contiguous, 1 strided)
//! 23      4*K*C*d_hat   f32 values, stage-major, code-major, channel-minor
//! end-4   4             CRC32 of all preceding bytes
//! ```

use std::fs;
use std::path::Path;

use rvq_core::{Codebook, ResidualQuantizer};

use super::{grouping_tag, open_verified, read_file, Encoder};
use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"RVQC";
pub const VERSION: u16 = 1;

pub fn quantizer_to_bytes(q: &ResidualQuantizer) -> Vec<u8> {
    let mut e = Encoder::with_header(MAGIC, VERSION);
    e.geometry(q.geometry());
    e.u8(grouping_tag(q.grouping()));
    for codebook in q.codebooks() {
        for &v in codebook.as_slice() {
            e.f32(v);
        }
    }
    e.finish()
}

pub fn quantizer_from_bytes(bytes: &[u8]) -> Result<ResidualQuantizer, FormatError> {
    let mut d = open_verified(bytes, MAGIC, VERSION, "quantizer")?;
    let geometry = d.geometry()?;
    let grouping = d.grouping()?;
    let per_stage = geometry.num_codes() * geometry.code_dim();
    let expected = 4 * per_stage * geometry.num_codebooks();
    if d.remaining() != expected {
        return Err(FormatError::Length(format!(
            "codebook payload is {} bytes, geometry needs {expected}",
            d.remaining()
        )));
    }
    let mut codebooks = Vec::with_capacity(geometry.num_codebooks());
    for _ in 0..geometry.num_codebooks() {
        let raw = d.take(4 * per_stage)?;
        let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        codebooks.push(Codebook::new(geometry.code_dim(), values).map_err(|e| FormatError::Field(e.to_string()))?);
    }
    d.finish()?;
    Ok(ResidualQuantizer::new(geometry, grouping, codebooks)?)
}

pub fn save_quantizer(path: impl AsRef<Path>, q: &ResidualQuantizer) -> Result<(), FormatError> {
    fs::write(path, quantizer_to_bytes(q))?;
    Ok(())
}

pub fn load_quantizer(path: impl AsRef<Path>) -> Result<ResidualQuantizer, FormatError> {
    quantizer_from_bytes(&read_file(path.as_ref())?)
}
