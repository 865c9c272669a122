#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rvq_core::{Codebook, Grouping, QuantizerGeometry, ResidualQuantizer};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_codebook(rng: &mut ChaCha8Rng, codes: usize, dim: usize, scale: f32) -> Codebook {
    Codebook::new(dim, gaussian(rng, codes * dim).into_iter().map(|v| v * scale).collect()).unwrap()
}

/// Codebooks with shrinking scale per stage, like a trained residual stack.
pub fn random_quantizer(seed: u64, geometry: QuantizerGeometry, grouping: Grouping) -> ResidualQuantizer {
    let mut rng = rng(seed);
    let codebooks = (0..geometry.num_codebooks())
        .map(|k| random_codebook(&mut rng, geometry.num_codes(), geometry.code_dim(), 0.6f32.powi(k as i32)))
        .collect();
    ResidualQuantizer::new(geometry, grouping, codebooks).unwrap()
}

/// Stage-by-stage exhaustive scan: distances in f64 from the f32 residual,
/// strict comparison so the lowest index wins ties.
pub fn oracle_encode(z: &[f32], codebooks: &[Codebook]) -> Vec<u32> {
    let mut residual = z.to_vec();
    let mut out = Vec::new();
    for cb in codebooks {
        let mut best = (0usize, f64::INFINITY);
        for j in 0..cb.len() {
            let d: f64 = residual
                .iter()
                .zip(cb.entry(j))
                .map(|(&r, &c)| {
                    let diff = r as f64 - c as f64;
                    diff * diff
                })
                .sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        out.push(best.0 as u32);
        for (r, c) in residual.iter_mut().zip(cb.entry(best.0)) {
            *r -= c;
        }
    }
    out
}

pub fn sq_err(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}
