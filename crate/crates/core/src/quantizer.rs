use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use half::f16;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::geometry::QuantizerGeometry;
use crate::grouping::Grouping;

/// Floor applied to the standard deviation before it is rounded to half
/// precision, so constant vectors do not divide by zero.
pub const MIN_STD: f32 = 1e-6;

/// A vector after standard-deviation scaling and channel grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGroups {
    std_scale: f16,
    code_dim: usize,
    groups: Vec<f32>,
}

impl ScaledGroups {
    pub fn std_scale(&self) -> f16 {
        self.std_scale
    }

    /// All groups back to back, group-major.
    pub fn as_slice(&self) -> &[f32] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len() / self.code_dim
    }

    pub fn group(&self, index: usize) -> &[f32] {
        &self.groups[index * self.code_dim..(index + 1) * self.code_dim]
    }
}

/// Population standard deviation of `x`, clamped to [`MIN_STD`] and rounded
/// to half precision.
pub(crate) fn half_precision_std(x: &[f32]) -> Result<f16> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = x.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var).max(MIN_STD as f64);
    let half = f16::from_f64(std);
    if !half.is_finite() {
        return Err(Error::StdOverflow(std));
    }
    Ok(half)
}

fn scale_and_group_into(
    x: &[f32],
    geometry: &QuantizerGeometry,
    grouping: Grouping,
    grouped: &mut [f32],
) -> Result<f16> {
    if x.len() != geometry.dim() {
        return Err(Error::DimensionMismatch { expected: geometry.dim(), found: x.len() });
    }
    let std_scale = half_precision_std(x)?;
    let scale = std_scale.to_f32();
    grouping.gather(geometry, x, grouped);
    for v in grouped.iter_mut() {
        *v /= scale;
    }
    Ok(std_scale)
}

/// Scales `x` by its half-precision standard deviation and splits it into
/// `d / d_hat` groups. No mean is subtracted.
pub fn scale_and_group(x: &[f32], geometry: &QuantizerGeometry, grouping: Grouping) -> Result<ScaledGroups> {
    let mut groups = vec![0.0; geometry.dim()];
    let std_scale = scale_and_group_into(x, geometry, grouping, &mut groups)?;
    Ok(ScaledGroups { std_scale, code_dim: geometry.code_dim(), groups })
}

/// Greedy residual search over all stages in one pass. `residual` holds the
/// group on entry and the final residual on return. `on_stage` sees the stage,
/// the chosen index and the residual entering that stage.
#[inline]
pub(crate) fn encode_residual_with<F>(
    codebooks: &[Codebook],
    residual: &mut [f32],
    indices: &mut [u32],
    mut on_stage: F,
) where
    F: FnMut(usize, u32, &[f32]),
{
    for (stage, (codebook, index)) in codebooks.iter().zip(indices.iter_mut()).enumerate() {
        let (j, _) = codebook.nearest(residual);
        on_stage(stage, j, residual);
        *index = j;
        for (r, c) in residual.iter_mut().zip(codebook.entry(j as usize)) {
            *r -= c;
        }
    }
}

#[inline]
pub(crate) fn encode_residual(codebooks: &[Codebook], residual: &mut [f32], indices: &mut [u32]) {
    encode_residual_with(codebooks, residual, indices, |_, _, _| {});
}

fn norm(v: &[f32]) -> f32 {
    libm::sqrtf(v.iter().map(|x| x * x).sum())
}

/// Result of encoding one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEncoding {
    /// One code index per stage.
    pub indices: Vec<u32>,
    /// Residual norm before each stage, then after the last: `K + 1` values.
    pub residual_norms: Vec<f32>,
}

/// Encodes one group of `d_hat` values through every codebook in order,
/// picking the nearest code to the running residual at each stage.
///
/// # Panics
///
/// If `z` does not match the codebooks' code dimension.
pub fn rvq_encode_group(z: &[f32], codebooks: &[Codebook]) -> GroupEncoding {
    let mut residual = z.to_vec();
    let mut indices = vec![0u32; codebooks.len()];
    let mut residual_norms = Vec::with_capacity(codebooks.len() + 1);
    for codebook in codebooks {
        assert_eq!(codebook.code_dim(), z.len(), "group and codebook dimensions differ");
    }
    encode_residual_with(codebooks, &mut residual, &mut indices, |_, _, r| {
        residual_norms.push(norm(r));
    });
    residual_norms.push(norm(&residual));
    GroupEncoding { indices, residual_norms }
}

fn check_indices(indices: &[u32], codebooks: &[Codebook]) -> Result<()> {
    for (&index, codebook) in indices.iter().zip(codebooks) {
        if index as usize >= codebook.len() {
            return Err(Error::IndexOutOfRange { index, codes: codebook.len() });
        }
    }
    Ok(())
}

/// Sum of the codes selected at each stage.
pub fn rvq_decode_group(indices: &[u32], codebooks: &[Codebook]) -> Result<Vec<f32>> {
    if indices.len() != codebooks.len() {
        return Err(Error::DimensionMismatch { expected: codebooks.len(), found: indices.len() });
    }
    check_indices(indices, codebooks)?;
    let code_dim = codebooks.first().map_or(0, Codebook::code_dim);
    let mut out = vec![0.0; code_dim];
    accumulate_codes(indices, codebooks, &mut out);
    Ok(out)
}

#[inline]
fn accumulate_codes(indices: &[u32], codebooks: &[Codebook], out: &mut [f32]) {
    for (&index, codebook) in indices.iter().zip(codebooks) {
        for (o, c) in out.iter_mut().zip(codebook.entry(index as usize)) {
            *o += c;
        }
    }
}

/// A quantized vector: its half-precision scale plus `groups * K` indices,
/// group-major, stage-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    std_scale: f16,
    indices: Vec<u32>,
}

impl QuantizedVector {
    pub fn new(std_scale: f16, indices: Vec<u32>) -> Self {
        Self { std_scale, indices }
    }

    pub fn std_scale(&self) -> f16 {
        self.std_scale
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// The `K` indices of one group.
    pub fn group_indices(&self, group: usize, num_codebooks: usize) -> &[u32] {
        &self.indices[group * num_codebooks..(group + 1) * num_codebooks]
    }

    pub fn into_parts(self) -> (f16, Vec<u32>) {
        (self.std_scale, self.indices)
    }
}

/// `K` codebooks shared by every channel group of a vector.
///
/// Immutable once built, so encode and decode can be called from any number
/// of threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualQuantizer {
    geometry: QuantizerGeometry,
    grouping: Grouping,
    codebooks: Vec<Codebook>,
}

impl ResidualQuantizer {
    pub fn new(geometry: QuantizerGeometry, grouping: Grouping, codebooks: Vec<Codebook>) -> Result<Self> {
        if codebooks.len() != geometry.num_codebooks() {
            return Err(Error::InvalidCodebook(format!(
                "expected {} codebooks, found {}",
                geometry.num_codebooks(),
                codebooks.len()
            )));
        }
        for (stage, codebook) in codebooks.iter().enumerate() {
            if codebook.len() != geometry.num_codes() || codebook.code_dim() != geometry.code_dim() {
                return Err(Error::InvalidCodebook(format!(
                    "codebook {stage} has {} codes of dimension {}, expected {} of dimension {}",
                    codebook.len(),
                    codebook.code_dim(),
                    geometry.num_codes(),
                    geometry.code_dim()
                )));
            }
        }
        Ok(Self { geometry, grouping, codebooks })
    }

    pub fn geometry(&self) -> &QuantizerGeometry {
        &self.geometry
    }

    pub fn grouping(&self) -> Grouping {
        self.grouping
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub(crate) fn codebooks_mut(&mut self) -> &mut [Codebook] {
        &mut self.codebooks
    }

    /// Same codebooks, different channel grouping.
    pub fn with_grouping(mut self, grouping: Grouping) -> Self {
        self.grouping = grouping;
        self
    }

    pub fn scale_and_group(&self, x: &[f32]) -> Result<ScaledGroups> {
        scale_and_group(x, &self.geometry, self.grouping)
    }

    pub fn encode(&self, x: &[f32]) -> Result<QuantizedVector> {
        let mut scratch = vec![0.0; self.geometry.dim()];
        let mut indices = vec![0u32; self.geometry.indices_per_vector()];
        let std_scale = self.encode_into(x, &mut scratch, &mut indices)?;
        Ok(QuantizedVector { std_scale, indices })
    }

    /// Allocation-free encode. `scratch` must hold `d` values and `indices`
    /// `groups * K`.
    pub fn encode_into(&self, x: &[f32], scratch: &mut [f32], indices: &mut [u32]) -> Result<f16> {
        let std_scale = scale_and_group_into(x, &self.geometry, self.grouping, scratch)?;
        let code_dim = self.geometry.code_dim();
        let k = self.geometry.num_codebooks();
        for (residual, group_indices) in scratch.chunks_exact_mut(code_dim).zip(indices.chunks_exact_mut(k)) {
            encode_residual(&self.codebooks, residual, group_indices);
        }
        Ok(std_scale)
    }

    pub fn decode(&self, q: &QuantizedVector) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.geometry.dim()];
        self.decode_into(q.std_scale, &q.indices, &mut out)?;
        Ok(out)
    }

    /// Decodes using only the first `stages` codebooks of every group.
    pub fn decode_stages(&self, q: &QuantizedVector, stages: usize) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.geometry.dim()];
        self.decode_impl(q.std_scale, &q.indices, stages.min(self.geometry.num_codebooks()), &mut out)?;
        Ok(out)
    }

    pub fn decode_into(&self, std_scale: f16, indices: &[u32], out: &mut [f32]) -> Result<()> {
        self.decode_impl(std_scale, indices, self.geometry.num_codebooks(), out)
    }

    fn decode_impl(&self, std_scale: f16, indices: &[u32], stages: usize, out: &mut [f32]) -> Result<()> {
        let g = &self.geometry;
        if indices.len() != g.indices_per_vector() {
            return Err(Error::DimensionMismatch { expected: g.indices_per_vector(), found: indices.len() });
        }
        if out.len() != g.dim() {
            return Err(Error::DimensionMismatch { expected: g.dim(), found: out.len() });
        }
        let scale = std_scale.to_f32();
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::InvalidStdScale(scale));
        }
        let k = g.num_codebooks();
        for group_indices in indices.chunks_exact(k) {
            check_indices(group_indices, &self.codebooks)?;
        }
        let mut grouped = vec![0.0f32; g.dim()];
        for (acc, group_indices) in grouped.chunks_exact_mut(g.code_dim()).zip(indices.chunks_exact(k)) {
            accumulate_codes(&group_indices[..stages], &self.codebooks[..stages], acc);
        }
        self.grouping.scatter(g, &grouped, out);
        for v in out.iter_mut() {
            *v *= scale;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(d: usize, d_hat: usize, k: usize, c: usize) -> QuantizerGeometry {
        QuantizerGeometry::new(d, d_hat, k, c).unwrap()
    }

    #[test]
    fn constant_vector_uses_the_std_floor() {
        let g = geometry(32, 32, 1, 2);
        let x = vec![2.0f32; 32];
        let scaled = scale_and_group(&x, &g, Grouping::Contiguous).unwrap();
        assert_eq!(scaled.std_scale(), f16::from_f32(MIN_STD));
        let floor = f16::from_f32(MIN_STD).to_f32();
        assert!(scaled.as_slice().iter().all(|&v| v == 2.0 / floor));
    }

    #[test]
    fn scale_rejects_bad_input() {
        let g = geometry(4, 2, 1, 2);
        assert_eq!(
            scale_and_group(&[1.0, 2.0, 3.0], &g, Grouping::Contiguous),
            Err(Error::DimensionMismatch { expected: 4, found: 3 })
        );
        assert_eq!(
            scale_and_group(&[1.0, f32::INFINITY, 3.0, 4.0], &g, Grouping::Contiguous),
            Err(Error::NonFinite(1))
        );
        assert!(matches!(
            scale_and_group(&[1e30, -1e30, 0.0, 0.0], &g, Grouping::Contiguous),
            Err(Error::StdOverflow(_))
        ));
    }

    #[test]
    fn exact_match_then_zero_codes() {
        let cb1 = Codebook::new(2, (0..16).map(|i| i as f32).collect()).unwrap();
        let cb2 = Codebook::new(2, vec![3.0, 3.0, 0.0, 0.0, -1.0, 2.0]).unwrap();
        let z = cb1.entry(5).to_vec();
        let enc = rvq_encode_group(&z, &[cb1, cb2.clone(), cb2]);
        assert_eq!(enc.indices, vec![5, 1, 1]);
        assert_eq!(enc.residual_norms.len(), 4);
        assert_eq!(enc.residual_norms[3], 0.0);
    }

    #[test]
    fn zero_input_picks_zero_code() {
        let cb = Codebook::new(2, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let enc = rvq_encode_group(&[0.0, 0.0], &[cb.clone(), cb.clone()]);
        // two zero codes: the lower index wins
        assert_eq!(enc.indices, vec![1, 1]);
        assert_eq!(rvq_decode_group(&enc.indices, &[cb.clone(), cb]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_stage_decode_is_the_entry() {
        let cb = Codebook::new(3, vec![0.5, -1.5, 2.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!(rvq_decode_group(&[1], core::slice::from_ref(&cb)).unwrap(), vec![7.0, 8.0, 9.0]);
        assert_eq!(rvq_decode_group(&[2], &[cb]), Err(Error::IndexOutOfRange { index: 2, codes: 2 }));
    }

    #[test]
    fn strided_decode_places_slots_at_stride() {
        // one stage, codes are one-hot-ish so every slot is identifiable
        let g = geometry(8, 2, 1, 4);
        let cb = Codebook::new(2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let q = ResidualQuantizer::new(g, Grouping::Strided, vec![cb]).unwrap();
        let v = QuantizedVector::new(f16::ONE, vec![0, 1, 2, 3]);
        // group j slot t -> channel j + 4t
        assert_eq!(q.decode(&v).unwrap(), vec![1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn all_zero_codes_decode_to_zero() {
        let g = geometry(8, 4, 2, 3);
        let q = ResidualQuantizer::new(g, Grouping::Contiguous, vec![Codebook::zeros(3, 4), Codebook::zeros(3, 4)])
            .unwrap();
        let v = QuantizedVector::new(f16::ONE, vec![0; 4]);
        assert_eq!(q.decode(&v).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn decode_rejects_mismatched_vectors() {
        let g = geometry(8, 4, 2, 3);
        let q = ResidualQuantizer::new(g, Grouping::Contiguous, vec![Codebook::zeros(3, 4), Codebook::zeros(3, 4)])
            .unwrap();
        assert!(q.decode(&QuantizedVector::new(f16::ONE, vec![0; 3])).is_err());
        assert!(q.decode(&QuantizedVector::new(f16::ONE, vec![0, 0, 3, 0])).is_err());
        assert!(q.decode(&QuantizedVector::new(f16::NAN, vec![0; 4])).is_err());
    }

    #[test]
    fn quantizer_checks_codebook_shapes() {
        let g = geometry(8, 4, 2, 3);
        assert!(ResidualQuantizer::new(g, Grouping::Contiguous, vec![Codebook::zeros(3, 4)]).is_err());
        assert!(ResidualQuantizer::new(g, Grouping::Contiguous, vec![Codebook::zeros(3, 4), Codebook::zeros(2, 4)])
            .is_err());
        assert!(ResidualQuantizer::new(g, Grouping::Contiguous, vec![Codebook::zeros(3, 4), Codebook::zeros(3, 2)])
            .is_err());
    }
}
