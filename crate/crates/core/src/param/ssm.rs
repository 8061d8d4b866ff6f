use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::rows_serde;

/// Realized model
/// `dx = (Ax + Bu)dt + [Fx  Gu] dw`, `y = Cx + Du`, with `corr(dw₁, dw₂) = ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ssm {
    #[serde(rename = "A", with = "rows_serde")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "rows_serde")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "rows_serde")]
    pub c: DMatrix<f64>,
    #[serde(rename = "D", with = "rows_serde")]
    pub d: DMatrix<f64>,
    #[serde(rename = "F", with = "rows_serde")]
    pub f: DMatrix<f64>,
    #[serde(rename = "G", with = "rows_serde")]
    pub g: DMatrix<f64>,
    pub rho: f64,
}

/// State, input and output dimensions `(n, ℓ, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub l: usize,
    pub q: usize,
}

impl Ssm {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        rho: f64,
    ) -> Result<Self> {
        let s = Self { a, b, c, d, f, g, rho };
        s.validate()?;
        Ok(s)
    }

    /// All-zero model of the given shape.
    pub fn zeros(dims: Dims) -> Self {
        let Dims { n, l, q } = dims;
        Self {
            a: DMatrix::zeros(n, n),
            b: DMatrix::zeros(n, l),
            c: DMatrix::zeros(q, n),
            d: DMatrix::zeros(q, l),
            f: DMatrix::zeros(n, n),
            g: DMatrix::zeros(n, l),
            rho: 0.0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.a.nrows(),
            l: self.b.ncols(),
            q: self.c.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let l = self.b.ncols();
        let q = self.c.nrows();
        let shape_ok = n > 0
            && self.a.shape() == (n, n)
            && self.b.shape() == (n, l)
            && self.c.shape() == (q, n)
            && self.d.shape() == (q, l)
            && self.f.shape() == (n, n)
            && self.g.shape() == (n, l);
        if !shape_ok {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent SSM shapes: A {:?} B {:?} C {:?} D {:?} F {:?} G {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape(),
                self.f.shape(),
                self.g.shape()
            )));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::DomainError(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d, &self.f, &self.g]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}
