use std::io;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] rvq_core::Error),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("not a {format} file: magic {found:?}")]
    Magic { format: &'static str, found: [u8; 4] },
    #[error("unsupported {format} version {found} (this build reads version {expected})")]
    Version { format: &'static str, found: u16, expected: u16 },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("invalid field: {0}")]
    Field(String),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
}

impl FormatError {
    /// True for errors caused by damaged or malformed bytes.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            FormatError::Checksum { .. } | FormatError::Magic { .. } | FormatError::Length(_) | FormatError::Field(_)
        )
    }
}
