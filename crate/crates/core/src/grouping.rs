use alloc::vec::Vec;

use crate::geometry::QuantizerGeometry;

/// How channels of a vector are assigned to groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Grouping {
    /// Group `j` holds channels `j*d_hat .. (j+1)*d_hat`.
    #[default]
    Contiguous,
    /// Group `j` holds channels `j, j+s, j+2s, ...` with stride `s = d / d_hat`.
    Strided,
}

impl Grouping {
    /// Channel stored at `slot` of `group`.
    #[inline]
    pub fn channel(self, geometry: &QuantizerGeometry, group: usize, slot: usize) -> usize {
        match self {
            Grouping::Contiguous => group * geometry.code_dim() + slot,
            Grouping::Strided => group + slot * geometry.groups(),
        }
    }

    /// Writes `x` into `grouped` in group-major order.
    pub fn gather(self, geometry: &QuantizerGeometry, x: &[f32], grouped: &mut [f32]) {
        let code_dim = geometry.code_dim();
        match self {
            Grouping::Contiguous => grouped.copy_from_slice(x),
            Grouping::Strided => {
                for (group, out) in grouped.chunks_exact_mut(code_dim).enumerate() {
                    for (slot, v) in out.iter_mut().enumerate() {
                        *v = x[self.channel(geometry, group, slot)];
                    }
                }
            }
        }
    }

    /// Inverse of [`Grouping::gather`].
    pub fn scatter(self, geometry: &QuantizerGeometry, grouped: &[f32], x: &mut [f32]) {
        let code_dim = geometry.code_dim();
        match self {
            Grouping::Contiguous => x.copy_from_slice(grouped),
            Grouping::Strided => {
                for (group, values) in grouped.chunks_exact(code_dim).enumerate() {
                    for (slot, v) in values.iter().enumerate() {
                        x[self.channel(geometry, group, slot)] = *v;
                    }
                }
            }
        }
    }

    /// `perm[g * d_hat + t]` is the channel stored at group `g`, slot `t`.
    pub fn permutation(self, geometry: &QuantizerGeometry) -> Vec<usize> {
        (0..geometry.groups())
            .flat_map(|g| (0..geometry.code_dim()).map(move |t| self.channel(geometry, g, t)))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Grouping::Contiguous => "contiguous",
            Grouping::Strided => "strided",
        }
    }
}
