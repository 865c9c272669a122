//! Text and JSON-lines renderings of training, rate and memory reports.

use std::fmt::Write as _;
use std::io::{self, Write};

use rvq_core::store::MemoryReport;
use rvq_core::trainer::{StepRecord, TrainingReport};
use rvq_core::{compression_rate, IndexPacking, QuantizerGeometry};
use serde_json::{json, Value};

pub fn step_json(step: &StepRecord) -> Value {
    json!({
        "step": step.step,
        "mse": step.mse,
        "stage_energy": step.stage_energy,
        "reseeds": step.reseeds,
        "codes_used": step.codes_used,
    })
}

/// One JSON object per line, one line per step.
pub fn write_training_report(mut out: impl Write, report: &TrainingReport) -> io::Result<()> {
    for step in &report.steps {
        writeln!(out, "{}", step_json(step))?;
    }
    Ok(())
}

/// `5.565…` → `"5.57x"`; `None` → `"undefined"`.
pub fn format_ratio(ratio: Option<f64>) -> String {
    match ratio {
        Some(r) => format!("{r:.2}x"),
        None => "undefined".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub geometry: QuantizerGeometry,
    pub packing: IndexPacking,
    pub std_bits: u32,
    pub bits_per_vector: u64,
    pub rate: f64,
}

impl RateRow {
    pub fn new(geometry: QuantizerGeometry, std_bits: u32, packing: IndexPacking) -> Self {
        let index_bits = geometry.indices_per_vector() as u64 * packing.bits_per_index(geometry.num_codes()) as u64;
        Self {
            geometry,
            packing,
            std_bits,
            bits_per_vector: index_bits + std_bits as u64,
            rate: compression_rate(&geometry, std_bits, packing),
        }
    }

    pub fn to_json(&self) -> Value {
        let g = &self.geometry;
        json!({
            "dim": g.dim(),
            "code_dim": g.code_dim(),
            "codebooks": g.num_codebooks(),
            "codes": g.num_codes(),
            "packing": self.packing.name(),
            "std_bits": self.std_bits,
            "bits_per_vector": self.bits_per_vector,
            "baseline_bits": 16 * g.dim(),
            "rate": self.rate,
        })
    }
}

pub fn rate_table(rows: &[RateRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>5} {:>8} {:>9} {:>6} {:>8} {:>8} {:>9}",
        "dim", "code_dim", "codebooks", "codes", "packing", "bits", "rate"
    )
    .unwrap();
    for r in rows {
        let g = &r.geometry;
        writeln!(
            s,
            "{:>5} {:>8} {:>9} {:>6} {:>8} {:>8} {:>9}",
            g.dim(),
            g.code_dim(),
            g.num_codebooks(),
            g.num_codes(),
            r.packing.name(),
            r.bits_per_vector,
            format_ratio(Some(r.rate))
        )
        .unwrap();
    }
    s
}

pub fn memory_json(report: &MemoryReport) -> Value {
    json!({
        "tokens": report.tokens,
        "index_bytes": report.index_bytes,
        "std_bytes": report.std_bytes,
        "codebook_bytes": report.codebook_bytes,
        "baseline_bytes": report.baseline_bytes,
        "headline_ratio": report.headline_ratio(),
        "amortized_ratio": report.amortized_ratio(),
        "streams": report.streams.iter().map(|s| json!({
            "layer": s.layer,
            "projection": s.projection.name(),
            "tokens": s.tokens,
            "index_bytes": s.index_bytes,
            "std_bytes": s.std_bytes,
            "codebook_bytes": s.codebook_bytes,
            "baseline_bytes": s.baseline_bytes,
        })).collect::<Vec<_>>(),
    })
}

pub fn memory_table(report: &MemoryReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>5} {:>6} {:>8} {:>12} {:>10} {:>14} {:>14}",
        "layer", "proj", "tokens", "index_bytes", "std_bytes", "codebook_bytes", "baseline_bytes"
    )
    .unwrap();
    for r in &report.streams {
        writeln!(
            s,
            "{:>5} {:>6} {:>8} {:>12} {:>10} {:>14} {:>14}",
            r.layer,
            r.projection.name(),
            r.tokens,
            r.index_bytes,
            r.std_bytes,
            r.codebook_bytes,
            r.baseline_bytes
        )
        .unwrap();
    }
    writeln!(
        s,
        "{:>5} {:>6} {:>8} {:>12} {:>10} {:>14} {:>14}",
        "total", "", report.tokens, report.index_bytes, report.std_bytes, report.codebook_bytes, report.baseline_bytes
    )
    .unwrap();
    writeln!(s, "headline ratio:  {}", format_ratio(report.headline_ratio())).unwrap();
    writeln!(s, "amortized ratio: {}", format_ratio(report.amortized_ratio())).unwrap();
    s
}
