use crate::geometry::QuantizerGeometry;
use crate::packing::IndexPacking;

/// Ratio of half-precision storage (16 bits per channel) to quantized storage
/// (all indices of one vector plus `std_bits` for its scale).
pub fn compression_rate(geometry: &QuantizerGeometry, std_bits: u32, packing: IndexPacking) -> f64 {
    let baseline = geometry.dim() as f64 * 16.0;
    let index_bits = geometry.indices_per_vector() as f64 * packing.bits_per_index(geometry.num_codes()) as f64;
    baseline / (index_bits + std_bits as f64)
}
