//! Batch encode/decode split across threads. Output order never depends on
//! the thread count.

use std::num::NonZeroUsize;
use std::thread;

use rvq_core::{QuantizedVector, ResidualQuantizer};

use crate::error::FormatError;
use crate::format::PackedIndexBlock;

/// Below this many vectors per thread, spawning is not worth it.
const MIN_CHUNK: usize = 64;

/// `RVQ_THREADS` if set to a positive integer, else the available cores.
pub fn thread_count() -> usize {
    std::env::var("RVQ_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, NonZeroUsize::get))
}

fn chunk_len(items: usize, threads: usize) -> usize {
    items.div_ceil(threads.max(1)).max(MIN_CHUNK)
}

/// Encodes row-major `vectors` (a multiple of the quantizer dimension).
pub fn encode_batch(
    quantizer: &ResidualQuantizer,
    vectors: &[f32],
    threads: usize,
) -> Result<Vec<QuantizedVector>, FormatError> {
    let g = quantizer.geometry();
    let d = g.dim();
    if !vectors.len().is_multiple_of(d) {
        return Err(rvq_core::Error::DimensionMismatch { expected: d, found: vectors.len() % d }.into());
    }
    let n = vectors.len() / d;
    let encode_chunk = |rows: &[f32]| -> rvq_core::Result<Vec<QuantizedVector>> {
        let mut scratch = vec![0.0; d];
        rows.chunks_exact(d)
            .map(|x| {
                let mut indices = vec![0; g.indices_per_vector()];
                let std = quantizer.encode_into(x, &mut scratch, &mut indices)?;
                Ok(QuantizedVector::new(std, indices))
            })
            .collect()
    };
    let per = chunk_len(n, threads);
    if threads <= 1 || n <= per {
        return Ok(encode_chunk(vectors)?);
    }
    let parts: Vec<rvq_core::Result<Vec<QuantizedVector>>> = thread::scope(|s| {
        let handles: Vec<_> = vectors.chunks(per * d).map(|rows| s.spawn(move || encode_chunk(rows))).collect();
        handles.into_iter().map(|h| h.join().expect("encode worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Encodes `vectors` and appends them to `block`.
pub fn encode_into_block(
    quantizer: &ResidualQuantizer,
    vectors: &[f32],
    block: &mut PackedIndexBlock,
    threads: usize,
) -> Result<(), FormatError> {
    block.check_quantizer(quantizer)?;
    for q in encode_batch(quantizer, vectors, threads)? {
        block.push(&q)?;
    }
    Ok(())
}

/// Decodes `block[start..start + count]` into row-major vectors.
pub fn decode_range(
    quantizer: &ResidualQuantizer,
    block: &PackedIndexBlock,
    start: usize,
    count: usize,
    threads: usize,
) -> Result<Vec<f32>, FormatError> {
    block.check_quantizer(quantizer)?;
    if start.checked_add(count).is_none_or(|e| e > block.len()) {
        return Err(
            rvq_core::Error::PositionOutOfRange { position: start.saturating_add(count), len: block.len() }.into()
        );
    }
    let d = quantizer.geometry().dim();
    let mut out = vec![0.0f32; count * d];
    let decode_chunk = |first: usize, rows: &mut [f32]| -> Result<(), FormatError> {
        for (i, row) in rows.chunks_exact_mut(d).enumerate() {
            let q = block.get(first + i)?;
            quantizer.decode_into(q.std_scale(), q.indices(), row)?;
        }
        Ok(())
    };
    let per = chunk_len(count, threads);
    if threads <= 1 || count <= per {
        decode_chunk(start, &mut out)?;
        return Ok(out);
    }
    thread::scope(|s| {
        let handles: Vec<_> = out
            .chunks_mut(per * d)
            .enumerate()
            .map(|(i, rows)| s.spawn(move || decode_chunk(start + i * per, rows)))
            .collect();
        handles.into_iter().try_for_each(|h| h.join().expect("decode worker panicked"))
    })?;
    Ok(out)
}
