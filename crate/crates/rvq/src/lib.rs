//! Files, reports and the `rvq` command line tool on top of [`rvq_core`].
//!
//! Four little-endian binary formats are defined here, each closed by a CRC32
//! of every preceding byte: quantizer files (`RVQC`), activation dumps
//! (`RVQA`), packed index blocks (`RVQI`) and cache store snapshots (`RVQS`).
//! Byte layouts are documented in `docs/FORMATS.md`.

pub mod cli;
mod error;
pub mod format;
pub mod parallel;
pub mod report;

pub use error::FormatError;
