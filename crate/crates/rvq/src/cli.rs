//! The `rvq` command line: argument definitions and subcommand drivers.
//!
//! Exit codes are 0 on success, 1 for usage errors (bad flags, invalid
//! geometry or trainer settings) and 2 for data errors (unreadable, damaged
//! or mismatched files).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rvq_core::store::{Projection, QuantizedCacheStore};
use rvq_core::synthetic::{generate_synthetic_activations, MixtureSpec, Tail};
use rvq_core::trainer::{Trainer, TrainerConfig};
use rvq_core::{Grouping, IndexPacking, QuantizerGeometry};
use serde_json::json;

use crate::error::FormatError;
use crate::format::{load_quantizer, save_quantizer, save_snapshot, DType, DumpReader, DumpWriter, PackedIndexBlock};
use crate::parallel::{decode_range, encode_into_block, thread_count};
use crate::report::{format_ratio, memory_json, memory_table, rate_table, write_training_report, RateRow};

/// Vectors read or written per chunk by the file commands.
const CHUNK: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "rvq", version, about = "Residual vector quantization of KV-cache activations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a quantizer on an activation dump or a synthetic stream.
    Train(TrainArgs),
    /// Quantize an activation dump into a packed index block.
    Encode(EncodeArgs),
    /// Reconstruct an activation dump from a packed index block.
    Decode(DecodeArgs),
    /// Print compression rates.
    Stats(StatsArgs),
    /// Run an append/read workload through the quantized cache store.
    CacheSim(CacheSimArgs),
    /// Write a synthetic activation dump.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupingArg {
    Contiguous,
    Strided,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Contiguous => Grouping::Contiguous,
            GroupingArg::Strided => Grouping::Strided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PackingArg {
    Packed,
    Byte16,
}

impl From<PackingArg> for IndexPacking {
    fn from(p: PackingArg) -> Self {
        match p {
            PackingArg::Packed => IndexPacking::Packed,
            PackingArg::Byte16 => IndexPacking::Byte16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DTypeArg {
    F32,
    F16,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F16 => DType::F16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Key,
    Value,
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Vector dimension d.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Channels per group.
    #[arg(long, default_value_t = 32)]
    pub code_dim: usize,
    /// Residual stages K.
    #[arg(long, default_value_t = 8)]
    pub codebooks: usize,
    /// Codes per codebook C.
    #[arg(long, default_value_t = 2048)]
    pub codes: usize,
}

impl GeometryArgs {
    pub fn geometry(&self) -> Result<QuantizerGeometry, CliError> {
        Ok(QuantizerGeometry::new(self.dim, self.code_dim, self.codebooks, self.codes)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainerArgs {
    #[arg(long, default_value_t = 0.99)]
    pub decay: f32,
    /// Vectors per training step.
    #[arg(long, default_value_t = 4096)]
    pub batch_tokens: usize,
    /// EMA steps after the initialization batch.
    #[arg(long, default_value_t = 60)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub kmeans_iters: usize,
    /// EMA count below which a code is reseeded.
    #[arg(long, default_value_t = 0.01)]
    pub dead_code_threshold: f32,
}

impl TrainerArgs {
    pub fn config(&self) -> TrainerConfig {
        TrainerConfig {
            decay: self.decay,
            batch_tokens: self.batch_tokens,
            steps: self.steps,
            kmeans_iters: self.kmeans_iters,
            dead_code_threshold: self.dead_code_threshold,
            seed: self.seed,
            ..TrainerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MixtureArgs {
    /// Mixture components of the synthetic stream.
    #[arg(long, default_value_t = 256)]
    pub components: usize,
    /// Standard deviation of the component means.
    #[arg(long, default_value_t = 1.0)]
    pub mean_scale: f32,
    /// Within-component noise scale.
    #[arg(long, default_value_t = 0.5)]
    pub spread: f32,
    /// Student-t noise with this many degrees of freedom instead of Gaussian.
    #[arg(long)]
    pub student_t: Option<f32>,
    /// Leading channels multiplied by --outlier-gain.
    #[arg(long, default_value_t = 0)]
    pub outlier_channels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub outlier_gain: f32,
}

impl MixtureArgs {
    pub fn spec(&self, dim: usize) -> MixtureSpec {
        MixtureSpec {
            dim,
            components: self.components,
            mean_scale: self.mean_scale,
            spread: self.spread,
            tail: self.student_t.map_or(Tail::Gaussian, |dof| Tail::StudentT { dof }),
            outlier_channels: self.outlier_channels,
            outlier_gain: self.outlier_gain,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Activation dump to train on.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Train on the synthetic mixture instead of a dump.
    #[arg(long)]
    pub synthetic: bool,
    /// Quantizer file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Training report (JSON lines); defaults to `<output>.report.jsonl`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Grouping; defaults to strided for keys and contiguous for values.
    #[arg(long, value_enum)]
    pub grouping: Option<GroupingArg>,
    #[arg(long, value_enum, default_value_t = RoleArg::Key)]
    pub role: RoleArg,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub trainer: TrainerArgs,
    #[command(flatten)]
    pub mixture: MixtureArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub quantizer: PathBuf,
    /// Activation dump.
    #[arg(long)]
    pub input: PathBuf,
    /// Packed index block to write.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = PackingArg::Packed)]
    pub packing: PackingArg,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub quantizer: PathBuf,
    /// Packed index block.
    #[arg(long)]
    pub input: PathBuf,
    /// Activation dump to write.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
    pub dtype: DTypeArg,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Take the geometry from this quantizer file instead of the flags.
    #[arg(long)]
    pub quantizer: Option<PathBuf>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long, value_enum, default_value_t = PackingArg::Packed)]
    pub packing: PackingArg,
    /// Bits charged for the per-vector scale.
    #[arg(long, default_value_t = 16)]
    pub std_bits: u32,
    /// Print K in {4, 6, 8} x C in {1024, 2048} at the given d and d_hat.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub json_lines: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CacheSimArgs {
    #[arg(long)]
    pub key_quantizer: PathBuf,
    #[arg(long)]
    pub value_quantizer: PathBuf,
    /// Tokens appended per layer.
    #[arg(long, default_value_t = 10_000)]
    pub tokens: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the grouping stored in the key quantizer file.
    #[arg(long, value_enum)]
    pub key_grouping: Option<GroupingArg>,
    #[arg(long, value_enum, default_value_t = PackingArg::Packed)]
    pub packing: PackingArg,
    /// Write the final store here.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub json_lines: bool,
    /// Outlier channels of the synthetic key stream.
    #[arg(long, default_value_t = 4)]
    pub key_outlier_channels: usize,
    #[arg(long, default_value_t = 8.0)]
    pub key_outlier_gain: f32,
    #[arg(long, default_value_t = 256)]
    pub components: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mean_scale: f32,
    #[arg(long, default_value_t = 0.5)]
    pub spread: f32,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub count: u64,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DTypeArg::F32)]
    pub dtype: DTypeArg,
    #[command(flatten)]
    pub mixture: MixtureArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<rvq_core::Error> for CliError {
    fn from(e: rvq_core::Error) -> Self {
        use rvq_core::Error as E;
        match e {
            E::InvalidGeometry(_) | E::InvalidConfig(_) | E::InvalidMixture(_) | E::BatchTooSmall { .. } => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Core(e) => e.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn with_path<T, E: Into<CliError>>(path: &Path, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| match e.into() {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
    })
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::Decode(a) => cmd_decode(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::CacheSim(a) => cmd_cache_sim(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

pub fn default_report_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".report.jsonl");
    PathBuf::from(name)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let geometry = a.geometry.geometry()?;
    let grouping = match (a.grouping, a.role) {
        (Some(g), _) => g.into(),
        (None, RoleArg::Key) => Projection::Key.default_grouping(),
        (None, RoleArg::Value) => Projection::Value.default_grouping(),
    };
    let config = a.trainer.config();
    let mut trainer = Trainer::new(geometry, grouping, config)?;
    let mut x = vec![0.0f32; geometry.dim()];

    if let Some(input) = &a.input {
        let mut reader = with_path(input, DumpReader::open(input))?;
        if reader.dim() != geometry.dim() {
            return Err(CliError::Data(format!(
                "{}: dump has dimension {}, --dim expects {}",
                input.display(),
                reader.dim(),
                geometry.dim()
            )));
        }
        while !trainer.is_done() && with_path(input, reader.next_into(&mut x))? {
            trainer.push(&x)?;
        }
    } else {
        let count = (config.steps + 1) * config.batch_tokens;
        let mut stream = generate_synthetic_activations(&a.mixture.spec(geometry.dim()), count, config.seed)?;
        while stream.next_into(&mut x) {
            trainer.push(&x)?;
        }
    }

    let (quantizer, report) = trainer.finish()?;
    with_path(&a.output, save_quantizer(&a.output, &quantizer))?;
    let report_path = a.report.clone().unwrap_or_else(|| default_report_path(&a.output));
    let mut w = BufWriter::new(with_path(&report_path, File::create(&report_path))?);
    write_training_report(&mut w, &report)?;
    w.flush()?;

    writeln!(out, "quantizer: {}", a.output.display())?;
    writeln!(out, "report: {}", report_path.display())?;
    writeln!(
        out,
        "steps: {}  initial mse: {:.6}  final mse: {:.6}  reseeds: {}",
        report.steps.len(),
        report.initial_mse().unwrap_or(f64::NAN),
        report.final_mse().unwrap_or(f64::NAN),
        report.total_reseeds()
    )?;
    Ok(())
}

pub fn cmd_encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let quantizer = with_path(&a.quantizer, load_quantizer(&a.quantizer))?;
    let mut reader = with_path(&a.input, DumpReader::open(&a.input))?;
    let d = quantizer.geometry().dim();
    if reader.dim() != d {
        return Err(CliError::Data(format!(
            "{}: dump has dimension {}, quantizer expects {d}",
            a.input.display(),
            reader.dim()
        )));
    }
    let threads = thread_count();
    let mut block = PackedIndexBlock::for_quantizer(&quantizer, a.packing.into());
    let mut chunk = vec![0.0f32; CHUNK * d];
    loop {
        let mut rows = 0;
        while rows < CHUNK && with_path(&a.input, reader.next_into(&mut chunk[rows * d..(rows + 1) * d]))? {
            rows += 1;
        }
        if rows == 0 {
            break;
        }
        with_path(&a.input, encode_into_block(&quantizer, &chunk[..rows * d], &mut block, threads))?;
    }
    with_path(&a.output, block.save(&a.output))?;
    writeln!(
        out,
        "encoded {} vectors ({} packing, {} index bytes per vector)",
        block.len(),
        block.packing().name(),
        block.record_index_bytes()
    )?;
    Ok(())
}

pub fn cmd_decode(a: &DecodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let quantizer = with_path(&a.quantizer, load_quantizer(&a.quantizer))?;
    let block = with_path(&a.input, PackedIndexBlock::load(&a.input))?;
    with_path(&a.input, block.check_quantizer(&quantizer))?;
    let d = quantizer.geometry().dim();
    let threads = thread_count();
    let mut writer = with_path(&a.output, DumpWriter::create(&a.output, d, block.len() as u64, a.dtype.into()))?;
    let mut start = 0;
    while start < block.len() {
        let n = CHUNK.min(block.len() - start);
        let rows = decode_range(&quantizer, &block, start, n, threads)?;
        for row in rows.chunks_exact(d) {
            with_path(&a.output, writer.write(row))?;
        }
        start += n;
    }
    with_path(&a.output, writer.finish())?;
    writeln!(out, "decoded {} vectors", block.len())?;
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let geometry = match &a.quantizer {
        Some(path) => *with_path(path, load_quantizer(path))?.geometry(),
        None => a.geometry.geometry()?,
    };
    let packing = a.packing.into();
    let mut rows = Vec::new();
    if a.grid {
        for k in [4, 6, 8] {
            for c in [1024, 2048] {
                let g = QuantizerGeometry::new(geometry.dim(), geometry.code_dim(), k, c)?;
                rows.push(RateRow::new(g, a.std_bits, packing));
            }
        }
    } else {
        rows.push(RateRow::new(geometry, a.std_bits, packing));
    }
    if a.json_lines {
        for r in &rows {
            writeln!(out, "{}", r.to_json())?;
        }
    } else {
        write!(out, "{}", rate_table(&rows))?;
    }
    Ok(())
}

fn sim_seed(seed: u64, layer: usize, projection: Projection) -> u64 {
    let p = match projection {
        Projection::Key => 0,
        Projection::Value => 1,
    };
    seed ^ ((2 * layer as u64 + p + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn cmd_cache_sim(a: &CacheSimArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut key_q = with_path(&a.key_quantizer, load_quantizer(&a.key_quantizer))?;
    if let Some(g) = a.key_grouping {
        key_q = key_q.with_grouping(g.into());
    }
    let value_q = with_path(&a.value_quantizer, load_quantizer(&a.value_quantizer))?;

    let mut store = QuantizedCacheStore::new(a.packing.into());
    let mut sq_err = [0.0f64; 2];
    let mut channels = [0u64; 2];
    for layer in 0..a.layers {
        for (slot, projection, q) in [(0, Projection::Key, &key_q), (1, Projection::Value, &value_q)] {
            store.register(layer, projection, q.clone())?;
            let d = q.geometry().dim();
            let spec = MixtureSpec {
                dim: d,
                components: a.components,
                mean_scale: a.mean_scale,
                spread: a.spread,
                tail: Tail::Gaussian,
                outlier_channels: if projection == Projection::Key { a.key_outlier_channels.min(d) } else { 0 },
                outlier_gain: if projection == Projection::Key { a.key_outlier_gain } else { 1.0 },
            };
            let mut stream = generate_synthetic_activations(&spec, a.tokens, sim_seed(a.seed, layer, projection))?;
            let mut x = vec![0.0f32; d];
            while stream.next_into(&mut x) {
                let pos = store.append(layer, projection, &x)?;
                let y = store.read(layer, projection, pos)?;
                sq_err[slot] += x.iter().zip(&y).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>();
                channels[slot] += d as u64;
            }
        }
    }

    let report = store.memory_report();
    let mse = |slot: usize| (channels[slot] > 0).then(|| sq_err[slot] / channels[slot] as f64);
    if a.json_lines {
        writeln!(out, "{}", memory_json(&report))?;
        writeln!(
            out,
            "{}",
            json!({
                "key_mse": mse(0),
                "value_mse": mse(1),
                "key_grouping": key_q.grouping().name(),
                "value_grouping": value_q.grouping().name(),
            })
        )?;
    } else {
        write!(out, "{}", memory_table(&report))?;
        let fmt = |m: Option<f64>| m.map_or_else(|| format_ratio(None), |m| format!("{m:.6}"));
        writeln!(out, "key mse ({}):   {}", key_q.grouping().name(), fmt(mse(0)))?;
        writeln!(out, "value mse ({}): {}", value_q.grouping().name(), fmt(mse(1)))?;
    }
    if let Some(path) = &a.snapshot {
        with_path(path, save_snapshot(path, &store))?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let count = usize::try_from(a.count).map_err(|_| CliError::Usage(format!("--count {} is too large", a.count)))?;
    let mut stream = generate_synthetic_activations(&a.mixture.spec(a.dim), count, a.seed)?;
    let mut writer = with_path(&a.output, DumpWriter::create(&a.output, a.dim, a.count, a.dtype.into()))?;
    let mut x = vec![0.0f32; a.dim];
    while stream.next_into(&mut x) {
        with_path(&a.output, writer.write(&x))?;
    }
    let header = with_path(&a.output, writer.finish())?;
    writeln!(out, "wrote {} vectors of dimension {} ({})", header.count, header.dim, header.dtype.name())?;
    Ok(())
}
