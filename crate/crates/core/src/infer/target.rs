use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalized log-density over `ℝᵈ`, `−∞` outside its support.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Analytic gradient, when the target provides one.
    fn gradient(&self, _x: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }

    fn coordinate_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }
}

/// How HMC obtains gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientMode {
    /// Central differences with step `h`.
    FiniteDiff { h: f64 },
    /// The target's own gradient.
    Supplied,
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::FiniteDiff { h: 1e-5 }
    }
}

impl GradientMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GradientMode::FiniteDiff { h } if !(h > 0.0 && h.is_finite()) => {
                Err(Error::InvalidConfig(format!("finite-difference step {h} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Log-density and gradient at `x`; the gradient may be non-finite near the support boundary.
pub fn value_and_gradient<T: LogDensity + ?Sized>(target: &T, x: &[f64], mode: GradientMode) -> Result<(f64, Vec<f64>)> {
    match mode {
        GradientMode::Supplied => target
            .gradient(x)
            .ok_or_else(|| Error::InvalidConfig("target does not supply a gradient".into())),
        GradientMode::FiniteDiff { h } => {
            let lp = target.log_density(x);
            let mut g = vec![0.0; x.len()];
            if !lp.is_finite() {
                g.fill(f64::NAN);
                return Ok((lp, g));
            }
            let mut y = x.to_vec();
            for i in 0..x.len() {
                y[i] = x[i] + h;
                let up = target.log_density(&y);
                y[i] = x[i] - h;
                let dn = target.log_density(&y);
                y[i] = x[i];
                g[i] = (up - dn) / (2.0 * h);
            }
            Ok((lp, g))
        }
    }
}
