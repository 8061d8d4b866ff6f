//! Flat column-major copies of the model matrices for allocation-free stepping.

use crate::param::Ssm;

pub(crate) struct Flat {
    pub n: usize,
    pub l: usize,
    pub q: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub rho: f64,
}

impl Flat {
    pub fn new(s: &Ssm) -> Self {
        let dims = s.dims();
        Self {
            n: dims.n,
            l: dims.l,
            q: dims.q,
            a: s.a.as_slice().to_vec(),
            b: s.b.as_slice().to_vec(),
            c: s.c.as_slice().to_vec(),
            d: s.d.as_slice().to_vec(),
            f: s.f.as_slice().to_vec(),
            g: s.g.as_slice().to_vec(),
            rho: s.rho,
        }
    }

    /// Bound on the magnitude of the second-moment dynamics, used for RK4 step control.
    pub fn rate(&self) -> f64 {
        let fro = |m: &[f64]| m.iter().map(|v| v * v).sum::<f64>().sqrt();
        2.0 * fro(&self.a) + fro(&self.f).powi(2)
    }
}

/// `out = M x` for column-major `M` (`rows × x.len()`).
#[inline]
pub(crate) fn matvec(m: &[f64], rows: usize, x: &[f64], out: &mut [f64]) {
    out[..rows].fill(0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = &m[j * rows..(j + 1) * rows];
        for i in 0..rows {
            out[i] += col[i] * xj;
        }
    }
}

/// `out += M x`.
#[inline]
pub(crate) fn matvec_add(m: &[f64], rows: usize, x: &[f64], out: &mut [f64]) {
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = &m[j * rows..(j + 1) * rows];
        for i in 0..rows {
            out[i] += col[i] * xj;
        }
    }
}
