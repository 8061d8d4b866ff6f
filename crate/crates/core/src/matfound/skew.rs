use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Skew-symmetric matrix stored as its below-diagonal entries, column by
/// column (the `veck` ordering).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewMatrix {
    dim: usize,
    packed: Vec<f64>,
}

/// Number of free entries of an `n × n` skew-symmetric matrix.
pub fn skew_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl SkewMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; skew_len(dim)],
        }
    }

    pub fn from_packed(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != skew_len(dim) {
            return Err(Error::DimensionMismatch(format!(
                "skew {dim}x{dim} needs {} packed entries, got {}",
                skew_len(dim),
                packed.len()
            )));
        }
        Ok(Self { dim, packed })
    }

    /// Skew part `(M − Mᵀ)/2` of a square matrix.
    pub fn project(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut packed = Vec::with_capacity(skew_len(n));
        for j in 0..n {
            for i in (j + 1)..n {
                packed.push(0.5 * (m[(i, j)] - m[(j, i)]));
            }
        }
        Self { dim: n, packed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim;
        let mut s = DMatrix::zeros(n, n);
        let mut k = 0;
        for j in 0..n {
            for i in (j + 1)..n {
                s[(i, j)] = self.packed[k];
                s[(j, i)] = -self.packed[k];
                k += 1;
            }
        }
        s
    }
}
