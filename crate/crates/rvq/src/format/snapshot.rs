//! `RVQS` cache-store snapshots.
//!
//! ```text
//! field               size
//! magic "RVQS"        4
//! version (1)         2
//! packing             1
//! stream count s      4 (u32)
//! s streams, ordered by (layer, projection):
//!   layer             4 (u32)
//!   projection        1 (0 key, 1 value)
//!   quantizer length  4 (u32)
//!   quantizer         an embedded RVQC file, with its own checksum
//!   token count n     8 (u64)
//!   scales            2*n, f16
//!   indices           n * record bytes, as in RVQI
//! CRC32               4, over all preceding bytes
//! ```

use std::fs;
use std::path::Path;

use rvq_core::f16;
use rvq_core::store::{Projection, QuantizedCacheStore};

use super::quantizer_file::{quantizer_from_bytes, quantizer_to_bytes};
use super::{open_verified, packing_tag, read_file, Encoder};
use crate::error::FormatError;

pub const MAGIC: &[u8; 4] = b"RVQS";
pub const VERSION: u16 = 1;

fn projection_tag(p: Projection) -> u8 {
    match p {
        Projection::Key => 0,
        Projection::Value => 1,
    }
}

pub fn snapshot_to_bytes(store: &QuantizedCacheStore) -> Result<Vec<u8>, FormatError> {
    let mut e = Encoder::with_header(MAGIC, VERSION);
    e.u8(packing_tag(store.packing()));
    let streams: Vec<_> = store.streams().collect();
    e.u32(streams.len() as u32);
    for (layer, projection, stream) in streams {
        let layer = u32::try_from(layer).map_err(|_| FormatError::Field(format!("layer {layer} exceeds u32")))?;
        e.u32(layer);
        e.u8(projection_tag(projection));
        let q = quantizer_to_bytes(stream.quantizer());
        e.u32(q.len() as u32);
        e.bytes(&q);
        e.u64(stream.len() as u64);
        for s in stream.stds() {
            e.u16(s.to_bits());
        }
        e.bytes(stream.packed_indices());
    }
    Ok(e.finish())
}

pub fn snapshot_from_bytes(bytes: &[u8]) -> Result<QuantizedCacheStore, FormatError> {
    let mut d = open_verified(bytes, MAGIC, VERSION, "snapshot")?;
    let packing = d.packing()?;
    let count = d.u32()?;
    let mut store = QuantizedCacheStore::new(packing);
    let mut last: Option<(usize, Projection)> = None;
    for _ in 0..count {
        let layer = d.u32()? as usize;
        let projection = match d.u8()? {
            0 => Projection::Key,
            1 => Projection::Value,
            t => return Err(FormatError::Field(format!("unknown projection tag {t}"))),
        };
        if last.is_some_and(|prev| prev >= (layer, projection)) {
            return Err(FormatError::Field(format!(
                "stream (layer {layer}, {}) is duplicated or out of order",
                projection.name()
            )));
        }
        last = Some((layer, projection));
        let qlen = d.u32()? as usize;
        let quantizer = quantizer_from_bytes(d.take(qlen)?).map_err(|e| match e {
            FormatError::Core(e) => FormatError::Field(e.to_string()),
            FormatError::Version { .. } | FormatError::Magic { .. } | FormatError::Checksum { .. } => {
                FormatError::Field(format!("embedded quantizer: {e}"))
            }
            e => e,
        })?;
        let tokens = d.u64()?;
        let g = *quantizer.geometry();
        let record = packing.packed_len(g.indices_per_vector(), g.num_codes());
        let needed = tokens as u128 * (record as u128 + 2);
        if needed > d.remaining() as u128 {
            return Err(FormatError::Length(format!("stream declares {tokens} tokens, payload is too short")));
        }
        let tokens = tokens as usize;
        let stds: Vec<f16> =
            d.take(2 * tokens)?.chunks_exact(2).map(|b| f16::from_bits(u16::from_le_bytes([b[0], b[1]]))).collect();
        let packed = d.take(record * tokens)?;
        for chunk in packed.chunks_exact(record.max(1)) {
            packing
                .unpack(chunk, g.indices_per_vector(), g.num_codes())
                .map_err(|e| FormatError::Field(e.to_string()))?;
        }
        store
            .restore_stream(layer, projection, quantizer, packed.to_vec(), stds)
            .map_err(|e| FormatError::Field(e.to_string()))?;
    }
    d.finish()?;
    Ok(store)
}

pub fn save_snapshot(path: impl AsRef<Path>, store: &QuantizedCacheStore) -> Result<(), FormatError> {
    fs::write(path, snapshot_to_bytes(store)?)?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<QuantizedCacheStore, FormatError> {
    snapshot_from_bytes(&read_file(path.as_ref())?)
}
