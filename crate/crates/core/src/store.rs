//! Append-only quantized KV cache.
//!
//! Each (layer, projection) stream owns one quantizer and stores, per token,
//! a half-precision scale and a fixed-size record of packed indices. Records
//! are padded to whole bytes so any position decodes in O(1).
//!
//! Appending takes `&mut self` and reading `&self`, so a reader can never
//! observe a token whose bytes are still being written.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use half::f16;

use crate::error::{Error, Result};
use crate::grouping::Grouping;
use crate::packing::IndexPacking;
use crate::quantizer::{QuantizedVector, ResidualQuantizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Projection {
    Key,
    Value,
}

impl Projection {
    /// Keys group channels with a stride, values contiguously.
    pub fn default_grouping(self) -> Grouping {
        match self {
            Projection::Key => Grouping::Strided,
            Projection::Value => Grouping::Contiguous,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Projection::Key => "key",
            Projection::Value => "value",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub layer: usize,
    pub projection: Projection,
    pub position: usize,
}

/// One (layer, projection) stream.
#[derive(Debug, Clone)]
pub struct QuantizedStream {
    quantizer: ResidualQuantizer,
    packing: IndexPacking,
    record_bytes: usize,
    indices: Vec<u8>,
    stds: Vec<f16>,
    scratch: Vec<f32>,
    index_scratch: Vec<u32>,
}

impl QuantizedStream {
    fn new(quantizer: ResidualQuantizer, packing: IndexPacking) -> Self {
        let g = *quantizer.geometry();
        Self {
            record_bytes: packing.packed_len(g.indices_per_vector(), g.num_codes()),
            packing,
            indices: Vec::new(),
            stds: Vec::new(),
            scratch: vec![0.0; g.dim()],
            index_scratch: vec![0; g.indices_per_vector()],
            quantizer,
        }
    }

    pub fn quantizer(&self) -> &ResidualQuantizer {
        &self.quantizer
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

    /// Packed index bytes of one token.
    pub fn record_bytes(&self) -> usize {
        self.record_bytes
    }

    pub fn packed_indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn stds(&self) -> &[f16] {
        &self.stds
    }

    /// Bytes held by this stream: packed indices plus 2 per scale.
    pub fn bytes_used(&self) -> usize {
        self.indices.len() + 2 * self.stds.len()
    }

    pub fn codebook_bytes(&self) -> usize {
        self.quantizer.codebooks().iter().map(|c| c.as_slice().len() * 4).sum()
    }

    fn append(&mut self, x: &[f32]) -> Result<usize> {
        let std = self.quantizer.encode_into(x, &mut self.scratch, &mut self.index_scratch)?;
        let num_codes = self.quantizer.geometry().num_codes();
        self.packing.pack_into(&self.index_scratch, num_codes, &mut self.indices)?;
        self.stds.push(std);
        Ok(self.stds.len() - 1)
    }

    fn check_position(&self, position: usize) -> Result<()> {
        if position >= self.len() {
            return Err(Error::PositionOutOfRange { position, len: self.len() });
        }
        Ok(())
    }

    /// The stored record at `position`.
    pub fn quantized(&self, position: usize) -> Result<QuantizedVector> {
        self.check_position(position)?;
        let g = self.quantizer.geometry();
        let record = &self.indices[position * self.record_bytes..(position + 1) * self.record_bytes];
        let indices = self.packing.unpack(record, g.indices_per_vector(), g.num_codes())?;
        Ok(QuantizedVector::new(self.stds[position], indices))
    }

    pub fn read(&self, position: usize) -> Result<Vec<f32>> {
        let q = self.quantized(position)?;
        self.quantizer.decode(&q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamReport {
    pub layer: usize,
    pub projection: Projection,
    pub tokens: usize,
    pub index_bytes: usize,
    pub std_bytes: usize,
    pub codebook_bytes: usize,
    pub baseline_bytes: usize,
}

/// Byte accounting for a store. `baseline_bytes` is what the same tokens
/// would take in half precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryReport {
    pub tokens: usize,
    pub index_bytes: usize,
    pub std_bytes: usize,
    pub codebook_bytes: usize,
    pub baseline_bytes: usize,
    pub streams: Vec<StreamReport>,
}

impl MemoryReport {
    /// Baseline over index and scale bytes; `None` for an empty store.
    pub fn headline_ratio(&self) -> Option<f64> {
        let quantized = self.index_bytes + self.std_bytes;
        (quantized > 0).then(|| self.baseline_bytes as f64 / quantized as f64)
    }

    /// Like [`MemoryReport::headline_ratio`] but also charging the codebooks.
    pub fn amortized_ratio(&self) -> Option<f64> {
        (self.tokens > 0)
            .then(|| self.baseline_bytes as f64 / (self.index_bytes + self.std_bytes + self.codebook_bytes) as f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct QuantizedCacheStore {
    packing: IndexPacking,
    streams: BTreeMap<(usize, Projection), QuantizedStream>,
    index_bytes: usize,
    std_bytes: usize,
}

impl QuantizedCacheStore {
    pub fn new(packing: IndexPacking) -> Self {
        Self { packing, ..Self::default() }
    }

    pub fn packing(&self) -> IndexPacking {
        self.packing
    }

    /// Assigns `quantizer` to a stream. Replacing the quantizer of a stream
    /// that already holds tokens is refused.
    pub fn register(&mut self, layer: usize, projection: Projection, quantizer: ResidualQuantizer) -> Result<()> {
        if self.streams.get(&(layer, projection)).is_some_and(|s| !s.is_empty()) {
            return Err(Error::InvalidConfig(format!("layer {layer} {} already holds tokens", projection.name())));
        }
        self.streams.insert((layer, projection), QuantizedStream::new(quantizer, self.packing));
        Ok(())
    }

    /// Rebuilds a stream from stored records, e.g. when loading a snapshot.
    pub fn restore_stream(
        &mut self,
        layer: usize,
        projection: Projection,
        quantizer: ResidualQuantizer,
        packed_indices: Vec<u8>,
        stds: Vec<f16>,
    ) -> Result<()> {
        self.register(layer, projection, quantizer)?;
        let stream = self.streams.get_mut(&(layer, projection)).expect("just registered");
        let expected = stream.record_bytes * stds.len();
        if packed_indices.len() != expected {
            self.streams.remove(&(layer, projection));
            return Err(Error::PackedLength { expected, found: packed_indices.len() });
        }
        if let Some(bad) = stds.iter().find(|s| !s.is_finite() || s.to_f32() < 0.0) {
            let bad = bad.to_f32();
            self.streams.remove(&(layer, projection));
            return Err(Error::InvalidStdScale(bad));
        }
        self.index_bytes += packed_indices.len();
        self.std_bytes += 2 * stds.len();
        stream.indices = packed_indices;
        stream.stds = stds;
        Ok(())
    }

    fn stream(&self, layer: usize, projection: Projection) -> Result<&QuantizedStream> {
        self.streams.get(&(layer, projection)).ok_or(Error::Unregistered { layer, projection: projection.name() })
    }

    pub fn stream_for(&self, layer: usize, projection: Projection) -> Option<&QuantizedStream> {
        self.streams.get(&(layer, projection))
    }

    pub fn streams(&self) -> impl Iterator<Item = (usize, Projection, &QuantizedStream)> {
        self.streams.iter().map(|(&(l, p), s)| (l, p, s))
    }

    /// Quantizes `x` and appends it; returns its position.
    pub fn append(&mut self, layer: usize, projection: Projection, x: &[f32]) -> Result<usize> {
        let stream = self
            .streams
            .get_mut(&(layer, projection))
            .ok_or(Error::Unregistered { layer, projection: projection.name() })?;
        let position = stream.append(x)?;
        self.index_bytes += stream.record_bytes;
        self.std_bytes += 2;
        Ok(position)
    }

    pub fn read(&self, layer: usize, projection: Projection, position: usize) -> Result<Vec<f32>> {
        self.stream(layer, projection)?.read(position)
    }

    pub fn read_key(&self, key: CacheKey) -> Result<Vec<f32>> {
        self.read(key.layer, key.projection, key.position)
    }

    pub fn quantized(&self, layer: usize, projection: Projection, position: usize) -> Result<QuantizedVector> {
        self.stream(layer, projection)?.quantized(position)
    }

    /// Tokens in one stream; 0 when unregistered.
    pub fn len(&self, layer: usize, projection: Projection) -> usize {
        self.streams.get(&(layer, projection)).map_or(0, QuantizedStream::len)
    }

    pub fn is_empty(&self) -> bool {
        self.streams.values().all(QuantizedStream::is_empty)
    }

    /// Packed index bytes plus 2 bytes per stored scale. Codebooks excluded.
    pub fn bytes_used(&self) -> usize {
        self.index_bytes + self.std_bytes
    }

    pub fn codebook_bytes(&self) -> usize {
        self.streams.values().map(QuantizedStream::codebook_bytes).sum()
    }

    pub fn memory_report(&self) -> MemoryReport {
        let streams: Vec<StreamReport> = self
            .streams
            .iter()
            .map(|(&(layer, projection), s)| StreamReport {
                layer,
                projection,
                tokens: s.len(),
                index_bytes: s.indices.len(),
                std_bytes: 2 * s.stds.len(),
                codebook_bytes: s.codebook_bytes(),
                baseline_bytes: 2 * s.len() * s.quantizer.geometry().dim(),
            })
            .collect();
        MemoryReport {
            tokens: streams.iter().map(|s| s.tokens).sum(),
            index_bytes: self.index_bytes,
            std_bytes: self.std_bytes,
            codebook_bytes: self.codebook_bytes(),
            baseline_bytes: streams.iter().map(|s| s.baseline_bytes).sum(),
            streams,
        }
    }
}
