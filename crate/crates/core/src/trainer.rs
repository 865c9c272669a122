//! Codebook learning: sequential k-means initialization on the first batch,
//! then exponential-moving-average updates on every following batch.
//!
//! Every group of every vector is one training sample for the shared
//! codebooks. Within a batch all assignments are computed with the codebooks
//! as they were when the batch started; all stages are then updated together.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::geometry::QuantizerGeometry;
use crate::grouping::Grouping;
use crate::kmeans::kmeans_init;
use crate::quantizer::{scale_and_group, ResidualQuantizer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    /// EMA decay, in (0, 1).
    pub decay: f32,
    /// Vectors per step.
    pub batch_tokens: usize,
    /// EMA steps after the initialization batch.
    pub steps: usize,
    pub kmeans_iters: usize,
    /// Added to EMA counts before dividing.
    pub epsilon: f32,
    /// Codes whose EMA count falls below this are reseeded.
    pub dead_code_threshold: f32,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            decay: 0.99,
            batch_tokens: 4096,
            steps: 60,
            kmeans_iters: 10,
            epsilon: 1e-5,
            dead_code_threshold: 0.01,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self, geometry: &QuantizerGeometry) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidConfig(format!("decay {} is not in (0, 1)", self.decay)));
        }
        if self.batch_tokens < geometry.num_codes() {
            return Err(Error::InvalidConfig(format!(
                "batch of {} tokens is smaller than C={}",
                self.batch_tokens,
                geometry.num_codes()
            )));
        }
        if self.kmeans_iters == 0 {
            return Err(Error::InvalidConfig("kmeans_iters must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon {} must be finite and non-negative", self.epsilon)));
        }
        if !(self.dead_code_threshold >= 0.0 && self.dead_code_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dead code threshold {} must be finite and non-negative",
                self.dead_code_threshold
            )));
        }
        Ok(())
    }
}

/// EMA statistics of one codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaStats {
    /// Cluster sizes `N_j`, one per code.
    pub counts: Vec<f32>,
    /// Embedding sums `m_j`, code-major.
    pub sums: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub stages: Vec<EmaStats>,
    /// EMA updates applied so far.
    pub step: usize,
}

impl TrainerState {
    /// State whose codebook entries `m / (N + epsilon)` reproduce `codebooks`
    /// for the given counts.
    pub fn from_codebooks(codebooks: &[Codebook], counts: &[Vec<f32>], epsilon: f32) -> Self {
        let stages = codebooks
            .iter()
            .zip(counts)
            .map(|(codebook, counts)| {
                let mut sums = Vec::with_capacity(codebook.as_slice().len());
                for (entry, &n) in codebook.iter().zip(counts) {
                    sums.extend(entry.iter().map(|v| v * (n + epsilon)));
                }
                EmaStats { counts: counts.clone(), sums }
            })
            .collect();
        Self { stages, step: 0 }
    }

    /// Rewrites every entry as `m / (N + epsilon)`.
    pub fn sync_codebooks(&self, codebooks: &mut [Codebook], epsilon: f32) {
        for (codebook, stats) in codebooks.iter_mut().zip(&self.stages) {
            let code_dim = codebook.code_dim();
            for j in 0..codebook.len() {
                let denom = stats.counts[j] + epsilon;
                for (e, m) in codebook.entry_mut(j).iter_mut().zip(&stats.sums[j * code_dim..(j + 1) * code_dim]) {
                    *e = m / denom;
                }
            }
        }
    }
}

/// Assignment statistics of one batch under fixed codebooks.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStatistics {
    /// Per stage, number of samples assigned to each code.
    pub counts: Vec<Vec<f32>>,
    /// Per stage, sum of the residuals assigned to each code, code-major.
    pub sums: Vec<Vec<f32>>,
    /// Mean squared residual norm entering each stage, plus after the last.
    pub stage_energy: Vec<f64>,
    pub samples: usize,
}

impl BatchStatistics {
    /// Encodes every group (`code_dim` values each) and accumulates per-stage
    /// statistics on the residual that entered each stage.
    ///
    /// Runs stage by stage over the whole batch so one codebook at a time
    /// stays in cache; per group the arithmetic is the same as the fused
    /// single-vector encoder.
    pub fn collect(codebooks: &[Codebook], groups: &[f32]) -> Self {
        let k = codebooks.len();
        let code_dim = codebooks[0].code_dim();
        let num_codes = codebooks[0].len();
        let mut counts = vec![vec![0.0f32; num_codes]; k];
        let mut sums = vec![vec![0.0f32; num_codes * code_dim]; k];
        let mut energy = vec![0.0f64; k + 1];
        let mut residuals = groups.to_vec();
        let samples = groups.len() / code_dim;

        for (stage, codebook) in codebooks.iter().enumerate() {
            let (counts, sums) = (&mut counts[stage], &mut sums[stage]);
            for r in residuals.chunks_exact_mut(code_dim) {
                let (j, _) = codebook.nearest(r);
                let j = j as usize;
                counts[j] += 1.0;
                for (s, v) in sums[j * code_dim..(j + 1) * code_dim].iter_mut().zip(r.iter()) {
                    *s += v;
                }
                energy[stage] += r.iter().map(|v| (v * v) as f64).sum::<f64>();
                for (r, c) in r.iter_mut().zip(codebook.entry(j)) {
                    *r -= c;
                }
            }
        }
        energy[k] = residuals.iter().map(|v| (v * v) as f64).sum::<f64>();
        for e in &mut energy {
            *e /= samples.max(1) as f64;
        }
        Self { counts, sums, stage_energy: energy, samples }
    }

    /// Mean squared error per channel after all stages.
    pub fn mse(&self, code_dim: usize) -> f64 {
        self.stage_energy.last().copied().unwrap_or(0.0) / code_dim as f64
    }
}

/// One EMA update of every stage:
/// `N <- decay*N + (1-decay)*n`, `m <- decay*m + (1-decay)*sum`,
/// `entry <- m / (N + epsilon)`.
pub fn ema_step(
    state: &mut TrainerState,
    codebooks: &mut [Codebook],
    batch: &BatchStatistics,
    decay: f32,
    epsilon: f32,
) {
    let keep = 1.0 - decay;
    for (stage, codebook) in codebooks.iter_mut().enumerate() {
        let stats = &mut state.stages[stage];
        let code_dim = codebook.code_dim();
        for j in 0..codebook.len() {
            let n = &mut stats.counts[j];
            *n = decay * *n + keep * batch.counts[stage][j];
            let denom = *n + epsilon;
            let m = &mut stats.sums[j * code_dim..(j + 1) * code_dim];
            let s = &batch.sums[stage][j * code_dim..(j + 1) * code_dim];
            for ((m, s), e) in m.iter_mut().zip(s).zip(codebook.entry_mut(j)) {
                *m = decay * *m + keep * s;
                *e = *m / denom;
            }
        }
    }
    state.step += 1;
}

/// Replaces every code whose EMA count is below `threshold` with the residual
/// of a random batch group at that stage. Returns the number of reseeded codes.
pub fn reseed_dead_codes<R: Rng>(
    state: &mut TrainerState,
    codebooks: &mut [Codebook],
    groups: &[f32],
    threshold: f32,
    epsilon: f32,
    rng: &mut R,
) -> usize {
    let code_dim = codebooks[0].code_dim();
    let samples = groups.len() / code_dim;
    if samples == 0 {
        return 0;
    }
    let mut reseeded = 0;
    let mut residual = vec![0.0f32; code_dim];
    for stage in 0..codebooks.len() {
        for j in 0..codebooks[stage].len() {
            if state.stages[stage].counts[j] >= threshold {
                continue;
            }
            let pick = rng.random_range(0..samples);
            residual.copy_from_slice(&groups[pick * code_dim..(pick + 1) * code_dim]);
            for earlier in &codebooks[..stage] {
                let (i, _) = earlier.nearest(&residual);
                for (r, c) in residual.iter_mut().zip(earlier.entry(i as usize)) {
                    *r -= c;
                }
            }
            let stats = &mut state.stages[stage];
            stats.counts[j] = 1.0;
            stats.sums[j * code_dim..(j + 1) * code_dim].copy_from_slice(&residual);
            for (e, m) in codebooks[stage].entry_mut(j).iter_mut().zip(&residual) {
                *e = m / (1.0 + epsilon);
            }
            reseeded += 1;
        }
    }
    reseeded
}

fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ (stage as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Initializes all stages from one batch of groups: stage 1 runs k-means on
/// the groups themselves, stage `i > 1` on what stages `1..i` leave behind.
pub fn init_residual_codebooks(
    groups: &[f32],
    geometry: &QuantizerGeometry,
    grouping: Grouping,
    kmeans_iters: usize,
    seed: u64,
) -> Result<ResidualQuantizer> {
    let code_dim = geometry.code_dim();
    if !groups.len().is_multiple_of(code_dim) {
        return Err(Error::DimensionMismatch { expected: code_dim, found: groups.len() });
    }
    let mut residuals = groups.to_vec();
    let mut codebooks = Vec::with_capacity(geometry.num_codebooks());
    for stage in 0..geometry.num_codebooks() {
        let codebook = kmeans_init(&residuals, code_dim, geometry.num_codes(), kmeans_iters, stage_seed(seed, stage))?;
        for r in residuals.chunks_exact_mut(code_dim) {
            let (j, _) = codebook.nearest(r);
            for (r, c) in r.iter_mut().zip(codebook.entry(j as usize)) {
                *r -= c;
            }
        }
        codebooks.push(codebook);
    }
    ResidualQuantizer::new(*geometry, grouping, codebooks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 0 for the initialization batch.
    pub step: usize,
    /// Reconstruction MSE per channel of the batch, in the scaled domain,
    /// measured with the codebooks as of the start of the step.
    pub mse: f64,
    /// Mean squared residual norm entering each stage, plus after the last.
    pub stage_energy: Vec<f64>,
    pub reseeds: usize,
    /// Distinct codes used per stage in this batch.
    pub codes_used: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingReport {
    pub steps: Vec<StepRecord>,
    /// Per stage, how often each code was picked in the last batch.
    pub utilization: Vec<Vec<u32>>,
}

impl TrainingReport {
    pub fn initial_mse(&self) -> Option<f64> {
        self.steps.first().map(|s| s.mse)
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.steps.last().map(|s| s.mse)
    }

    pub fn total_reseeds(&self) -> usize {
        self.steps.iter().map(|s| s.reseeds).sum()
    }
}

/// Streaming trainer: feed vectors with [`Trainer::push`], one step runs per
/// full batch.
#[derive(Debug, Clone)]
pub struct Trainer {
    geometry: QuantizerGeometry,
    grouping: Grouping,
    config: TrainerConfig,
    quantizer: Option<ResidualQuantizer>,
    state: Option<TrainerState>,
    rng: ChaCha8Rng,
    pending: Vec<f32>,
    report: TrainingReport,
}

impl Trainer {
    pub fn new(geometry: QuantizerGeometry, grouping: Grouping, config: TrainerConfig) -> Result<Self> {
        config.validate(&geometry)?;
        Ok(Self {
            geometry,
            grouping,
            config,
            quantizer: None,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed)),
            pending: Vec::with_capacity(config.batch_tokens * geometry.dim()),
            report: TrainingReport::default(),
        })
    }

    /// True once the initialization batch and all EMA steps have run.
    pub fn is_done(&self) -> bool {
        self.report.steps.len() > self.config.steps
    }

    pub fn report(&self) -> &TrainingReport {
        &self.report
    }

    pub fn quantizer(&self) -> Option<&ResidualQuantizer> {
        self.quantizer.as_ref()
    }

    pub fn state(&self) -> Option<&TrainerState> {
        self.state.as_ref()
    }

    /// Buffers one vector; runs a step when the batch is full. Vectors pushed
    /// after the last step are ignored.
    pub fn push(&mut self, x: &[f32]) -> Result<Option<&StepRecord>> {
        if x.len() != self.geometry.dim() {
            return Err(Error::DimensionMismatch { expected: self.geometry.dim(), found: x.len() });
        }
        if self.is_done() {
            return Ok(None);
        }
        self.pending.extend_from_slice(x);
        if self.pending.len() < self.config.batch_tokens * self.geometry.dim() {
            return Ok(None);
        }
        let batch = core::mem::take(&mut self.pending);
        let result = self.step_batch(&batch);
        self.pending = batch;
        self.pending.clear();
        result?;
        Ok(self.report.steps.last())
    }

    fn step_batch(&mut self, batch: &[f32]) -> Result<()> {
        let mut groups = Vec::with_capacity(batch.len());
        for x in batch.chunks_exact(self.geometry.dim()) {
            groups.extend_from_slice(scale_and_group(x, &self.geometry, self.grouping)?.as_slice());
        }
        let code_dim = self.geometry.code_dim();

        let (stats, reseeds) = match (&mut self.quantizer, &mut self.state) {
            (Some(quantizer), Some(state)) => {
                let stats = BatchStatistics::collect(quantizer.codebooks(), &groups);
                let codebooks = quantizer.codebooks_mut();
                ema_step(state, codebooks, &stats, self.config.decay, self.config.epsilon);
                let reseeds = reseed_dead_codes(
                    state,
                    codebooks,
                    &groups,
                    self.config.dead_code_threshold,
                    self.config.epsilon,
                    &mut self.rng,
                );
                (stats, reseeds)
            }
            _ => {
                let quantizer = init_residual_codebooks(
                    &groups,
                    &self.geometry,
                    self.grouping,
                    self.config.kmeans_iters,
                    self.config.seed,
                )?;
                let mut quantizer = quantizer;
                let stats = BatchStatistics::collect(quantizer.codebooks(), &groups);
                let state = TrainerState::from_codebooks(quantizer.codebooks(), &stats.counts, self.config.epsilon);
                state.sync_codebooks(quantizer.codebooks_mut(), self.config.epsilon);
                self.state = Some(state);
                self.quantizer = Some(quantizer);
                (stats, 0)
            }
        };

        self.report.steps.push(StepRecord {
            step: self.report.steps.len(),
            mse: stats.mse(code_dim),
            stage_energy: stats.stage_energy.clone(),
            reseeds,
            codes_used: stats.counts.iter().map(|c| c.iter().filter(|&&n| n > 0.0).count()).collect(),
        });
        self.report.utilization = stats.counts.iter().map(|c| c.iter().map(|&n| n as u32).collect()).collect();
        Ok(())
    }

    /// Returns the trained quantizer. Fails if no full batch was ever seen;
    /// a trailing partial batch is dropped.
    pub fn finish(self) -> Result<(ResidualQuantizer, TrainingReport)> {
        match self.quantizer {
            Some(q) => Ok((q, self.report)),
            None => Err(Error::EmptyStream),
        }
    }
}

/// Trains a quantizer on `stream`, consuming at most `steps + 1` batches.
pub fn train<I, V>(
    stream: I,
    geometry: QuantizerGeometry,
    grouping: Grouping,
    config: TrainerConfig,
) -> Result<(ResidualQuantizer, TrainingReport)>
where
    I: IntoIterator<Item = V>,
    V: AsRef<[f32]>,
{
    let mut trainer = Trainer::new(geometry, grouping, config)?;
    for x in stream {
        if trainer.is_done() {
            break;
        }
        trainer.push(x.as_ref())?;
    }
    trainer.finish()
}
