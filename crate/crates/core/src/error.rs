use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("standard deviation {0} does not fit in half precision")]
    StdOverflow(f64),
    #[error("invalid standard deviation scale {0}")]
    InvalidStdScale(f32),
    #[error("code index {index} out of range for a codebook of {codes} codes")]
    IndexOutOfRange { index: u32, codes: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("batch of {found} vectors is smaller than the {required} required")]
    BatchTooSmall { required: usize, found: usize },
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("stream ended before the first full batch")]
    EmptyStream,
    #[error("packed buffer is {found} bytes, expected {expected}")]
    PackedLength { expected: usize, found: usize },
    #[error("invalid mixture spec: {0}")]
    InvalidMixture(String),
    #[error("no quantizer registered for layer {layer} {projection}")]
    Unregistered { layer: usize, projection: &'static str },
    #[error("position {position} out of range for a stream of {len} tokens")]
    PositionOutOfRange { position: usize, len: usize },
}
