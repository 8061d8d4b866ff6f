use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::kernels::Chain;

/// Summary statistics of a chain after discarding `burn_in` draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub burn_in: usize,
    pub acceptance_rate: f64,
    pub forced_rejections: usize,
    pub divergences: usize,
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Integrated autocorrelation time, initial-positive-sequence estimate.
    pub autocorr_time: Vec<f64>,
    pub ess: Vec<f64>,
}

/// Integrated autocorrelation time `τ = −1 + 2 Σ_k Γ_k`, summing the paired
/// autocorrelations `Γ_k = ρ_{2k} + ρ_{2k+1}` while they stay positive. Capped
/// at the series length; a constant series returns the cap.
pub fn autocorr_time(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 { c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var) };
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let g = rho(2 * k) + rho(2 * k + 1);
        if g <= 0.0 {
            break;
        }
        tau += 2.0 * g;
        k += 1;
    }
    tau.clamp(f64::MIN_POSITIVE, n as f64)
}

pub fn diagnostics(chain: &Chain, burn_in: usize) -> Result<Diagnostics> {
    if burn_in >= chain.len() {
        return Err(Error::InvalidConfig(format!("burn-in {burn_in} leaves no draws of {}", chain.len())));
    }
    let kept = &chain.draws[burn_in..];
    let m = kept.len() as f64;
    let d = chain.names.len();
    let mut mean = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    let mut tau = Vec::with_capacity(d);
    let mut ess = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = kept.iter().map(|x| x[j]).collect();
        let mu = col.iter().sum::<f64>() / m;
        let var = if kept.len() > 1 { col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (m - 1.0) } else { 0.0 };
        let t = autocorr_time(&col);
        mean.push(mu);
        std.push(var.sqrt());
        tau.push(t);
        ess.push(m / t);
    }
    Ok(Diagnostics {
        iterations: chain.len(),
        burn_in,
        acceptance_rate: chain.acceptance_rate(),
        forced_rejections: chain.forced_rejections,
        divergences: chain.divergences,
        names: chain.names.clone(),
        mean,
        std,
        autocorr_time: tau,
        ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::kernels::rw_metropolis;
    use crate::infer::target::tests::std_normal;
    use crate::priors::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_series_hits_the_cap() {
        assert_eq!(autocorr_time(&[2.0; 50]), 50.0);
    }

    #[test]
    fn iid_series_has_unit_time() {
        let mut rng = RngStream::new(1, 0).rng();
        let x: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let t = autocorr_time(&x);
        assert!((t - 1.0).abs() < 0.2, "{t}");
    }

    #[test]
    fn ar1_time() {
        // τ = (1 + φ) / (1 − φ) = 3 for φ = 0.5.
        let mut rng = RngStream::new(2, 0).rng();
        let mut x = vec![0.0; 100_000];
        for i in 1..x.len() {
            x[i] = 0.5 * x[i - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let t = autocorr_time(&x);
        assert!((t - 3.0).abs() < 0.3, "{t}");
    }

    #[test]
    fn chain_summary() {
        let c = rw_metropolis(&std_normal(2), &[0.0; 2], 1000, 1.0, 0, 0.234, RngStream::new(3, 0)).unwrap();
        let d = diagnostics(&c, 500).unwrap();
        assert_eq!(d.mean.len(), 2);
        assert!((0.0..=1.0).contains(&d.acceptance_rate));
        assert!(diagnostics(&c, 1000).is_err());
    }
}
