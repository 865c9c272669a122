//! Reproducible stand-in for captured key/value projection outputs.
//!
//! Each vector is drawn as follows. Component means `mu_c` are sampled once
//! per stream, every channel i.i.d. `N(0, mean_scale^2)`. A sample picks a
//! component `c` uniformly, then channel `i` is
//! `gain_i * (mu_c[i] + spread * e_i)` where `e_i` is standard normal, or
//! Student-t with `dof` degrees of freedom for heavy tails. `gain_i` is
//! `outlier_gain` on the first `outlier_channels` channels and 1 elsewhere,
//! mimicking the few large-magnitude channels of attention keys.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    Gaussian,
    StudentT { dof: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub components: usize,
    pub mean_scale: f32,
    pub spread: f32,
    pub tail: Tail,
    pub outlier_channels: usize,
    pub outlier_gain: f32,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            dim: 128,
            components: 256,
            mean_scale: 1.0,
            spread: 0.5,
            tail: Tail::Gaussian,
            outlier_channels: 0,
            outlier_gain: 1.0,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidMixture(msg));
        if self.dim == 0 || self.components == 0 {
            return bad(format!("dim={} and components={} must be positive", self.dim, self.components));
        }
        for (name, v) in [("mean_scale", self.mean_scale), ("spread", self.spread), ("outlier_gain", self.outlier_gain)]
        {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name}={v} must be finite and non-negative"));
            }
        }
        if self.outlier_channels > self.dim {
            return bad(format!("{} outlier channels exceed dim={}", self.outlier_channels, self.dim));
        }
        if let Tail::StudentT { dof } = self.tail {
            if !(dof.is_finite() && dof > 0.0) {
                return bad(format!("Student-t dof={dof} must be positive"));
            }
        }
        Ok(())
    }
}

/// Iterator over `count` synthetic vectors.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    spec: MixtureSpec,
    means: Vec<f32>,
    student: Option<StudentT<f32>>,
    rng: ChaCha8Rng,
    remaining: usize,
}

/// Builds a deterministic stream of `count` vectors drawn from `spec`.
pub fn generate_synthetic_activations(spec: &MixtureSpec, count: usize, seed: u64) -> Result<SyntheticStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means =
        (0..spec.components * spec.dim).map(|_| spec.mean_scale * rng.sample::<f32, _>(StandardNormal)).collect();
    let student = match spec.tail {
        Tail::Gaussian => None,
        Tail::StudentT { dof } => Some(StudentT::new(dof).map_err(|e| Error::InvalidMixture(format!("{e}")))?),
    };
    Ok(SyntheticStream { spec: *spec, means, student, rng, remaining: count })
}

impl SyntheticStream {
    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Writes the next vector into `out`; false once the stream is exhausted.
    pub fn next_into(&mut self, out: &mut [f32]) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        let dim = self.spec.dim;
        let c = self.rng.random_range(0..self.spec.components);
        let mean = &self.means[c * dim..(c + 1) * dim];
        for (i, (o, mu)) in out.iter_mut().zip(mean).enumerate() {
            let e: f32 = match &self.student {
                None => self.rng.sample(StandardNormal),
                Some(t) => t.sample(&mut self.rng),
            };
            let gain = if i < self.spec.outlier_channels { self.spec.outlier_gain } else { 1.0 };
            *o = gain * (mu + self.spec.spread * e);
        }
        true
    }
}

impl Iterator for SyntheticStream {
    type Item = Vec<f32>;

    fn next(&mut self) -> Option<Vec<f32>> {
        let mut v = vec![0.0; self.spec.dim];
        self.next_into(&mut v).then_some(v)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for SyntheticStream {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_count_is_empty() {
        assert_eq!(generate_synthetic_activations(&MixtureSpec::default(), 0, 1).unwrap().count(), 0);
    }

    #[test]
    fn seeded_streams_repeat() {
        let spec = MixtureSpec {
            tail: Tail::StudentT { dof: 4.0 },
            outlier_channels: 3,
            outlier_gain: 8.0,
            ..MixtureSpec::default()
        };
        let a: Vec<Vec<f32>> = generate_synthetic_activations(&spec, 50, 9).unwrap().collect();
        let b: Vec<Vec<f32>> = generate_synthetic_activations(&spec, 50, 9).unwrap().collect();
        let c: Vec<Vec<f32>> = generate_synthetic_activations(&spec, 50, 10).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_specs() {
        let base = MixtureSpec::default();
        for bad in [
            MixtureSpec { dim: 0, ..base },
            MixtureSpec { components: 0, ..base },
            MixtureSpec { spread: -1.0, ..base },
            MixtureSpec { mean_scale: f32::NAN, ..base },
            MixtureSpec { outlier_channels: 129, ..base },
            MixtureSpec { tail: Tail::StudentT { dof: 0.0 }, ..base },
        ] {
            assert!(matches!(generate_synthetic_activations(&bad, 1, 0), Err(Error::InvalidMixture(_))));
        }
    }
}
