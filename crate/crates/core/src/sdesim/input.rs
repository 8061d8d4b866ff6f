use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfound::rows_serde;
use crate::sdesim::TimeGrid;

/// Deterministic input `u(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    Zero { l: usize },
    /// `u_j(t) = Σ_h a_{jh} sin(2πht/T) + b_{jh} cos(2πht/T)`, coefficient matrices `ℓ × H`.
    Fourier {
        #[serde(with = "rows_serde")]
        a: DMatrix<f64>,
        #[serde(with = "rows_serde")]
        b: DMatrix<f64>,
        period: f64,
    },
    /// Values on grid nodes (`ℓ × len`), linearly interpolated between them.
    Tabulated {
        grid: TimeGrid,
        #[serde(with = "rows_serde")]
        values: DMatrix<f64>,
    },
}

impl InputSignal {
    pub fn channels(&self) -> usize {
        match self {
            InputSignal::Zero { l } => *l,
            InputSignal::Fourier { a, .. } => a.nrows(),
            InputSignal::Tabulated { values, .. } => values.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputSignal::Zero { .. } => Ok(()),
            InputSignal::Fourier { a, b, period } => {
                if a.shape() != b.shape() || !(*period > 0.0) || a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("invalid Fourier input".into()));
                }
                Ok(())
            }
            InputSignal::Tabulated { grid, values } => {
                if values.ncols() != grid.len() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("tabulated input does not match its grid".into()));
                }
                Ok(())
            }
        }
    }

    /// Writes `u(t)` into `out` (length `ℓ`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            InputSignal::Zero { .. } => out.fill(0.0),
            InputSignal::Fourier { a, b, period } => {
                out.fill(0.0);
                let (s1, c1) = (2.0 * std::f64::consts::PI * t / period).sin_cos();
                let (mut s, mut c) = (s1, c1);
                for h in 0..a.ncols() {
                    for j in 0..out.len() {
                        out[j] += a[(j, h)] * s + b[(j, h)] * c;
                    }
                    (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
                }
            }
            InputSignal::Tabulated { grid, values } => {
                let x = ((t - grid.t0) / grid.dt).clamp(0.0, (grid.len() - 1) as f64);
                let i = (x.floor() as usize).min(grid.len().saturating_sub(2));
                let w = x - i as f64;
                for j in 0..out.len() {
                    out[j] = if grid.len() == 1 {
                        values[(j, 0)]
                    } else {
                        (1.0 - w) * values[(j, i)] + w * values[(j, i + 1)]
                    };
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Fourier input with `H` harmonics of period `T` and i.i.d. standard normal coefficients.
pub fn make_fourier_input<R: Rng + ?Sized>(l: usize, harmonics: usize, period: f64, rng: &mut R) -> Result<InputSignal> {
    if harmonics == 0 || !(period > 0.0) {
        return Err(Error::InvalidConfig("Fourier input needs H >= 1 and T > 0".into()));
    }
    let a = DMatrix::from_fn(l, harmonics, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DMatrix::from_fn(l, harmonics, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(InputSignal::Fourier { a, b, period })
}

/// Input values at the half-step nodes `t0 + k·dt/2` of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCache {
    l: usize,
    values: Vec<f64>,
}

impl InputCache {
    pub fn new(u: &InputSignal, grid: &TimeGrid) -> Self {
        let l = u.channels();
        let nodes = 2 * grid.steps() + 1;
        let mut values = vec![0.0; nodes * l];
        for k in 0..nodes {
            u.eval_into(grid.t0 + 0.5 * k as f64 * grid.dt, &mut values[k * l..(k + 1) * l]);
        }
        Self { l, values }
    }

    /// `u` at half-node `k`.
    pub fn half(&self, k: usize) -> &[f64] {
        &self.values[k * self.l..(k + 1) * self.l]
    }

    /// `u` at grid node `i`.
    pub fn node(&self, i: usize) -> &[f64] {
        self.half(2 * i)
    }
}
