//! k-means used to initialize codebooks.
//!
//! Seeding is k-means++; refinement is plain Lloyd iterations. A cluster that
//! ends an update with no members is moved onto the point currently farthest
//! from its centroid.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::{squared_distance, Codebook};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub clusters: usize,
    /// Number of assign + update rounds.
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Codebook,
    /// Nearest centroid of every point under the returned centroids.
    pub assignments: Vec<u32>,
    /// Within-cluster sum of squares after each assignment step, the last
    /// entry being the returned assignment.
    pub inertia: Vec<f64>,
}

/// Clusters `points` (row-major, `dim` values each).
pub fn kmeans(points: &[f32], dim: usize, config: &KMeansConfig) -> Result<KMeansFit> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: points.len() });
    }
    let n = points.len() / dim;
    let k = config.clusters;
    if k == 0 || n < k {
        return Err(Error::BatchTooSmall { required: k.max(1), found: n });
    }
    if config.iterations == 0 {
        return Err(Error::InvalidConfig("k-means needs at least one iteration".into()));
    }
    if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = plus_plus_seeds(points, dim, k, &mut rng);
    let mut assignments = vec![0u32; n];
    let mut distances = vec![0f32; n];
    let mut inertia = Vec::with_capacity(config.iterations + 1);

    for _ in 0..config.iterations {
        inertia.push(assign(points, &centroids, &mut assignments, &mut distances));
        update(points, dim, &assignments, &mut distances, &mut centroids);
    }
    inertia.push(assign(points, &centroids, &mut assignments, &mut distances));

    Ok(KMeansFit { centroids, assignments, inertia })
}

/// Runs [`kmeans`] and keeps only the centroids.
pub fn kmeans_init(first_batch: &[f32], dim: usize, clusters: usize, iterations: usize, seed: u64) -> Result<Codebook> {
    kmeans(first_batch, dim, &KMeansConfig { clusters, iterations, seed }).map(|fit| fit.centroids)
}

fn point(points: &[f32], dim: usize, i: usize) -> &[f32] {
    &points[i * dim..(i + 1) * dim]
}

fn plus_plus_seeds(points: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Codebook {
    let n = points.len() / dim;
    let mut entries = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    entries.extend_from_slice(point(points, dim, first));
    let mut min_dist: Vec<f32> =
        (0..n).map(|i| squared_distance(point(points, dim, i), point(points, dim, first))).collect();

    for _ in 1..k {
        let total: f64 = min_dist.iter().map(|&d| d as f64).sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in min_dist.iter().enumerate() {
                acc += d as f64;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just past the running sum
            chosen.unwrap_or_else(|| min_dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let c = point(points, dim, chosen);
        entries.extend_from_slice(c);
        for (i, d) in min_dist.iter_mut().enumerate() {
            let nd = squared_distance(point(points, dim, i), c);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Codebook::new(dim, entries).expect("seeds come from finite points")
}

fn assign(points: &[f32], centroids: &Codebook, assignments: &mut [u32], distances: &mut [f32]) -> f64 {
    let dim = centroids.code_dim();
    let mut inertia = 0.0f64;
    for ((p, a), d) in points.chunks_exact(dim).zip(assignments.iter_mut()).zip(distances.iter_mut()) {
        let (j, dist) = centroids.nearest(p);
        *a = j;
        *d = dist;
        inertia += dist as f64;
    }
    inertia
}

fn update(points: &[f32], dim: usize, assignments: &[u32], distances: &mut [f32], centroids: &mut Codebook) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0f64; k * dim];
    for (p, &a) in points.chunks_exact(dim).zip(assignments) {
        let a = a as usize;
        counts[a] += 1;
        for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += *v as f64;
        }
    }
    for (j, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        for (c, s) in centroids.entry_mut(j).iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
            *c = (*s / count as f64) as f32;
        }
    }
    for j in (0..k).filter(|&j| counts[j] == 0) {
        // farthest point, lowest index on ties; taken points drop to zero
        let mut far = 0;
        for (i, &d) in distances.iter().enumerate() {
            if d > distances[far] {
                far = i;
            }
        }
        distances[far] = 0.0;
        centroids.entry_mut(j).copy_from_slice(point(points, dim, far));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n_returns_the_points() {
        let points: Vec<f32> = (0..12).map(|i| (i * i) as f32).collect();
        let fit = kmeans(&points, 2, &KMeansConfig { clusters: 6, iterations: 1, seed: 3 }).unwrap();
        let mut got: Vec<Vec<f32>> = fit.centroids.iter().map(<[f32]>::to_vec).collect();
        let mut want: Vec<Vec<f32>> = points.chunks(2).map(<[f32]>::to_vec).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        assert_eq!(*fit.inertia.last().unwrap(), 0.0);
    }

    #[test]
    fn identical_points_do_not_produce_nan() {
        let points = [1.5f32, -2.0].repeat(10);
        let fit = kmeans(&points, 2, &KMeansConfig { clusters: 2, iterations: 5, seed: 0 }).unwrap();
        for c in fit.centroids.iter() {
            assert_eq!(c, &[1.5, -2.0]);
        }
        assert!(fit.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn empty_cluster_is_reseeded_on_farthest_point() {
        // two centroids seeded on the same spot: the duplicate gets nothing
        let points = vec![0.0f32, 0.0, 0.1, 0.0, 10.0, 0.0];
        let mut centroids = Codebook::new(2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let mut assignments = vec![0u32; 3];
        let mut distances = vec![0f32; 3];
        assign(&points, &centroids, &mut assignments, &mut distances);
        update(&points, 2, &assignments, &mut distances, &mut centroids);
        assert_eq!(centroids.entry(1), &[10.0, 0.0]);
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            kmeans(&[0.0; 6], 2, &KMeansConfig { clusters: 4, iterations: 1, seed: 0 }),
            Err(Error::BatchTooSmall { required: 4, found: 3 })
        );
    }
}
