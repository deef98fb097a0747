//! Tensor-product basis bookkeeping.
//!
//! Basis vectors are labelled by the position of each subsystem's eigenvalue
//! inside its spectrum list. Ordering is lexicographic with subsystem 0 the
//! slowest-varying index.

use crate::error::{Error, Result};

/// A joint eigenvalue assignment, stored as one spectrum position per subsystem.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(positions: Vec<usize>) -> Self {
        MultiIndex(positions)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

/// Row-major product basis over subsystems of the given dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductBasis {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl ProductBasis {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let len = dims.iter().product();
        ProductBasis { dims: dims.to_vec(), strides, len }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total dimension (1 for an empty product).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn check(&self, idx: &MultiIndex) -> Result<()> {
        if idx.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "multi-index has {} entries, basis has {} subsystems",
                idx.len(),
                self.dims.len()
            )));
        }
        for (k, (&p, &d)) in idx.0.iter().zip(&self.dims).enumerate() {
            if p >= d {
                return Err(Error::UnknownMultiIndex(format!(
                    "position {p} out of range for subsystem {k} of dimension {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn flat(&self, positions: &[usize]) -> usize {
        positions.iter().zip(&self.strides).map(|(p, s)| p * s).sum()
    }

    pub fn index_of(&self, idx: &MultiIndex) -> usize {
        self.flat(&idx.0)
    }

    pub fn positions_into(&self, mut flat: usize, out: &mut [usize]) {
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = flat / s;
            flat %= s;
        }
    }

    pub fn multi_index(&self, flat: usize) -> MultiIndex {
        let mut out = vec![0; self.dims.len()];
        self.positions_into(flat, &mut out);
        MultiIndex(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.len).map(move |k| self.multi_index(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_subsystem_is_slowest() {
        let b = ProductBasis::new(&[2, 3]);
        assert_eq!(b.len(), 6);
        assert_eq!(b.multi_index(1), MultiIndex(vec![0, 1]));
        assert_eq!(b.multi_index(3), MultiIndex(vec![1, 0]));
        for k in 0..6 {
            assert_eq!(b.index_of(&b.multi_index(k)), k);
        }
    }

    #[test]
    fn rejects_out_of_range_positions() {
        let b = ProductBasis::new(&[2, 2]);
        assert!(matches!(b.check(&MultiIndex(vec![0, 2])), Err(Error::UnknownMultiIndex(_))));
        assert!(matches!(b.check(&MultiIndex(vec![0])), Err(Error::DimensionMismatch(_))));
    }
}
