//! Residual vector quantization (RVQ) for KV-cache style activation vectors.
//!
//! A vector `x` of `d` channels is scaled by its standard deviation (stored in
//! half precision), split into `d / d_hat` channel groups, and every group is
//! quantized with the same stack of `K` codebooks by greedy residual search.
//! Decoding sums the selected codes, undoes the grouping and rescales.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reports and the
//! command line tool live in the companion `rvq` crate.
//!
//! ```
//! use rvq_core::{Codebook, Grouping, QuantizerGeometry, ResidualQuantizer};
//!
//! let geometry = QuantizerGeometry::new(4, 2, 1, 2).unwrap();
//! let codebook = Codebook::new(2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
//! let quantizer = ResidualQuantizer::new(geometry, Grouping::Contiguous, vec![codebook]).unwrap();
//!
//! let q = quantizer.encode(&[3.0, 3.0, -1.0, -1.0]).unwrap();
//! assert_eq!(q.indices(), &[1, 0]);
//! ```
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod codebook;
mod error;
mod geometry;
mod grouping;
pub mod kmeans;
mod packing;
mod quantizer;
mod rate;
pub mod store;
pub mod synthetic;
pub mod trainer;

pub use codebook::{squared_distance, Codebook};
pub use error::{Error, Result};
pub use geometry::QuantizerGeometry;
pub use grouping::Grouping;
pub use half::f16;
pub use packing::{pack_indices, unpack_indices, IndexPacking};
pub use quantizer::{
    rvq_decode_group, rvq_encode_group, scale_and_group, GroupEncoding, QuantizedVector, ResidualQuantizer,
    ScaledGroups, MIN_STD,
};
pub use rate::compression_rate;
