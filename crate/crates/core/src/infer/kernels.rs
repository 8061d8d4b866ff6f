use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::target::{value_and_gradient, GradientMode, LogDensity};
use crate::priors::RngStream;

/// `|ΔH|` beyond which an HMC trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

fn default_target_accept() -> f64 {
    0.234
}

/// MCMC transition kernel settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Gaussian random-walk Metropolis. During the first `warmup` iterations the
    /// scale adapts towards `target_accept`; afterwards it is frozen.
    Rwm {
        scale: f64,
        #[serde(default)]
        warmup: usize,
        #[serde(default = "default_target_accept")]
        target_accept: f64,
    },
    /// Leapfrog HMC with unit mass matrix.
    Hmc {
        step_size: f64,
        n_leapfrog: usize,
        #[serde(default)]
        gradient: GradientMode,
    },
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelConfig::Rwm { scale, target_accept, .. } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidConfig(format!("proposal scale {scale} must be positive")));
                }
                if !(*target_accept > 0.0 && *target_accept < 1.0) {
                    return Err(Error::InvalidConfig(format!("target acceptance {target_accept} must lie in (0, 1)")));
                }
                Ok(())
            }
            KernelConfig::Hmc { step_size, n_leapfrog, gradient } => {
                if !(*step_size > 0.0 && step_size.is_finite()) {
                    return Err(Error::InvalidConfig(format!("step size {step_size} must be positive")));
                }
                if *n_leapfrog == 0 {
                    return Err(Error::InvalidConfig("at least one leapfrog step is needed".into()));
                }
                gradient.validate()
            }
        }
    }
}

/// Output of one MCMC run; `draws[i]` is the state after iteration `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub log_posts: Vec<f64>,
    pub accepted: usize,
    /// Proposals whose density was `−∞`.
    pub forced_rejections: usize,
    /// HMC proposals with `|ΔH|` above the threshold or a non-finite gradient.
    pub divergences: usize,
    /// `ΔH` of every finite HMC proposal.
    pub energy_errors: Vec<f64>,
    pub kernel: KernelConfig,
    /// Proposal scale after warm-up (RWM).
    pub final_scale: Option<f64>,
    pub warmup: usize,
    pub seed: RngStream,
}

/// JSON sidecar of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub iterations: usize,
    pub dim: usize,
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub forced_rejections: usize,
    pub divergences: usize,
    pub max_abs_energy_error: Option<f64>,
    pub kernel: KernelConfig,
    pub final_scale: Option<f64>,
    pub warmup: usize,
    pub seed: RngStream,
}

impl Chain {
    fn empty<T: LogDensity + ?Sized>(target: &T, kernel: &KernelConfig, seed: RngStream, n_iters: usize) -> Self {
        Self {
            names: target.coordinate_names(),
            draws: Vec::with_capacity(n_iters),
            log_posts: Vec::with_capacity(n_iters),
            accepted: 0,
            forced_rejections: 0,
            divergences: 0,
            energy_errors: Vec::new(),
            kernel: kernel.clone(),
            final_scale: None,
            warmup: 0,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.draws.is_empty() {
            0.0
        } else {
            self.accepted as f64 / self.draws.len() as f64
        }
    }

    /// The last `k` draws.
    pub fn tail(&self, k: usize) -> Result<&[Vec<f64>]> {
        if k > self.len() {
            return Err(Error::InvalidConfig(format!("keep_last = {k} exceeds the chain length {}", self.len())));
        }
        Ok(&self.draws[self.len() - k..])
    }

    pub fn meta(&self) -> ChainMeta {
        ChainMeta {
            iterations: self.len(),
            dim: self.names.len(),
            acceptance_rate: self.acceptance_rate(),
            accepted: self.accepted,
            forced_rejections: self.forced_rejections,
            divergences: self.divergences,
            max_abs_energy_error: self.energy_errors.iter().map(|e| e.abs()).reduce(f64::max),
            kernel: self.kernel.clone(),
            final_scale: self.final_scale,
            warmup: self.warmup,
            seed: self.seed,
        }
    }

    /// Rows `iteration,log_post,<coordinates>`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "iteration,log_post")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (i, (x, lp)) in self.draws.iter().zip(&self.log_posts).enumerate() {
            write!(w, "{i},{lp}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_init<T: LogDensity + ?Sized>(target: &T, init: &[f64]) -> Result<f64> {
    if init.len() != target.dim() {
        return Err(Error::DimensionMismatch(format!("init has {} coordinates, target {}", init.len(), target.dim())));
    }
    Ok(target.log_density(init))
}

/// Symmetric Gaussian random-walk Metropolis.
pub fn rw_metropolis<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    n_iters: usize,
    proposal_scale: f64,
    warmup: usize,
    target_accept: f64,
    seed: RngStream,
) -> Result<Chain> {
    let kernel = KernelConfig::Rwm { scale: proposal_scale, warmup, target_accept };
    kernel.validate()?;
    let mut lp = check_init(target, init)?;
    let mut rng = seed.rng();
    let mut chain = Chain::empty(target, &kernel, seed, n_iters);
    chain.warmup = warmup.min(n_iters);
    let mut x = init.to_vec();
    let mut y = x.clone();
    let mut log_scale = proposal_scale.ln();
    for it in 0..n_iters {
        let scale = log_scale.exp();
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi = xi + scale * rng.sample::<f64, _>(StandardNormal);
        }
        let lq = target.log_density(&y);
        let u: f64 = rng.random();
        let accept = if lq == f64::NEG_INFINITY || lq.is_nan() {
            chain.forced_rejections += 1;
            false
        } else {
            lp == f64::NEG_INFINITY || u.ln() < lq - lp
        };
        if accept {
            std::mem::swap(&mut x, &mut y);
            lp = lq;
            chain.accepted += 1;
        }
        if it < warmup {
            let a = if accept { 1.0 } else { 0.0 };
            log_scale += (a - target_accept) / ((it + 1) as f64).powf(0.6);
        }
        chain.draws.push(x.clone());
        chain.log_posts.push(lp);
    }
    chain.final_scale = Some(log_scale.exp());
    Ok(chain)
}

/// Outcome of one leapfrog trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

/// `n` leapfrog steps from `(x, p)` with gradient `grad` at `x`; `None` if the
/// density or gradient becomes non-finite on the way.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    x: &[f64],
    p: &[f64],
    grad: &[f64],
    step: f64,
    n: usize,
    mode: GradientMode,
) -> Result<Option<Trajectory>> {
    let mut x = x.to_vec();
    let mut p: Vec<f64> = p.iter().zip(grad).map(|(pi, gi)| pi + 0.5 * step * gi).collect();
    let mut lp = f64::NAN;
    let mut g = grad.to_vec();
    for k in 0..n {
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += step * pi;
        }
        (lp, g) = value_and_gradient(target, &x, mode)?;
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let w = if k + 1 == n { 0.5 * step } else { step };
        for (pi, gi) in p.iter_mut().zip(&g) {
            *pi += w * gi;
        }
    }
    Ok(Some(Trajectory { x, p, log_density: lp, grad: g }))
}

/// Hamiltonian Monte Carlo with unit mass matrix and Metropolis correction.
pub fn hmc<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    n_iters: usize,
    step_size: f64,
    n_leapfrog: usize,
    gradient: GradientMode,
    seed: RngStream,
) -> Result<Chain> {
    let kernel = KernelConfig::Hmc { step_size, n_leapfrog, gradient };
    kernel.validate()?;
    check_init(target, init)?;
    let mut rng = seed.rng();
    let mut chain = Chain::empty(target, &kernel, seed, n_iters);
    let mut x = init.to_vec();
    let (mut lp, mut g) = value_and_gradient(target, &x, gradient)?;
    let d = x.len();
    let mut p = vec![0.0; d];
    for _ in 0..n_iters {
        for pi in p.iter_mut() {
            *pi = rng.sample(StandardNormal);
        }
        let u: f64 = rng.random();
        let h0 = -lp + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        let start_ok = lp.is_finite() && g.iter().all(|v| v.is_finite());
        let traj = if start_ok { leapfrog(target, &x, &p, &g, step_size, n_leapfrog, gradient)? } else { None };
        match traj {
            None => chain.forced_rejections += 1,
            Some(t) => {
                let h1 = -t.log_density + 0.5 * t.p.iter().map(|v| v * v).sum::<f64>();
                let dh = h1 - h0;
                if !dh.is_finite() || dh.abs() > DIVERGENCE_THRESHOLD {
                    chain.divergences += 1;
                } else {
                    chain.energy_errors.push(dh);
                    if u.ln() < -dh {
                        x = t.x;
                        lp = t.log_density;
                        g = t.grad;
                        chain.accepted += 1;
                    }
                }
            }
        }
        chain.draws.push(x.clone());
        chain.log_posts.push(lp);
    }
    Ok(chain)
}

/// Runs the configured kernel.
pub fn run_kernel<T: LogDensity + ?Sized>(target: &T, init: &[f64], n_iters: usize, kernel: &KernelConfig, seed: RngStream) -> Result<Chain> {
    match *kernel {
        KernelConfig::Rwm { scale, warmup, target_accept } => rw_metropolis(target, init, n_iters, scale, warmup, target_accept, seed),
        KernelConfig::Hmc { step_size, n_leapfrog, gradient } => hmc(target, init, n_iters, step_size, n_leapfrog, gradient, seed),
    }
}
