use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::param::{Dims, Ssm};
use crate::sdesim::{moment_functional_grad, Dataset, InputCache, InputSignal, MomentIntegrator, SsmGrad, TimeGrid};

/// Moments larger than this are treated as a diverged trajectory.
pub const BLOWUP: f64 = 1e12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Moment-Gaussian likelihood: `ỹ_m(t_i) ~ N(Cm(t_i) + Du(t_i), CΣ(t_i)Cᵀ + σ²I)`,
/// independent over realizations and measurement times.
#[derive(Debug, Clone)]
pub struct MomentLikelihood {
    grid: TimeGrid,
    input: InputSignal,
    cache: InputCache,
    nodes: Vec<usize>,
    x0: Vec<f64>,
    sigma: f64,
    realizations: usize,
    q: usize,
    /// Sample mean of the realizations at each measurement time.
    ybar: Vec<DVector<f64>>,
    /// Scatter `Σ_m (y_m − ȳ)(y_m − ȳ)ᵀ` at each measurement time.
    scatter: Vec<DMatrix<f64>>,
}

impl MomentLikelihood {
    /// Moments are integrated on a grid of step `moment_dt` (the data grid step when `None`);
    /// every measurement time must be one of its nodes.
    pub fn new(data: &Dataset, moment_dt: Option<f64>) -> Result<Self> {
        if !(data.sigma > 0.0) {
            return Err(Error::InvalidConfig("the likelihood needs a positive measurement std".into()));
        }
        let Some(first) = data.outputs.first() else {
            return Err(Error::InvalidConfig("dataset has no realizations".into()));
        };
        let q = first.0.nrows();
        let n_meas = data.times.len();
        if data.outputs.iter().any(|o| o.0.shape() != (q, n_meas)) {
            return Err(Error::DimensionMismatch("realizations differ in shape".into()));
        }
        let t0 = data.grid.t0;
        let t_last = *data.times.last().ok_or_else(|| Error::InvalidConfig("dataset has no measurement times".into()))?;
        let dt = moment_dt.unwrap_or(data.grid.dt);
        let grid = TimeGrid::new(t0, t_last.max(t0 + dt), dt)?;
        let nodes = data
            .times
            .iter()
            .map(|&t| grid.index_of(t).ok_or_else(|| Error::InvalidConfig(format!("measurement time {t} is not a multiple of the moment step {dt}"))))
            .collect::<Result<Vec<_>>>()?;
        let m = data.outputs.len() as f64;
        let mut ybar = Vec::with_capacity(n_meas);
        let mut scatter = Vec::with_capacity(n_meas);
        for i in 0..n_meas {
            let mean = data.outputs.iter().map(|o| o.0.column(i).into_owned()).sum::<DVector<f64>>() / m;
            let mut w = DMatrix::zeros(q, q);
            for o in &data.outputs {
                let r = o.0.column(i) - &mean;
                w += &r * r.transpose();
            }
            ybar.push(mean);
            scatter.push(w);
        }
        Ok(Self {
            cache: InputCache::new(&data.input, &grid),
            grid,
            input: data.input.clone(),
            nodes,
            x0: data.x0.clone(),
            sigma: data.sigma,
            realizations: data.outputs.len(),
            q,
            ybar,
            scatter,
        })
    }

    /// Model dimensions the data imply.
    pub fn dims(&self) -> Dims {
        Dims { n: self.x0.len(), l: self.input.channels(), q: self.q }
    }

    pub fn observations(&self) -> usize {
        self.realizations * self.nodes.len() * self.q
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `−∞` when the propagated moments diverge or leave `[−BLOWUP, BLOWUP]`.
    pub fn log_likelihood(&self, s: &Ssm) -> f64 {
        self.try_log_likelihood(s).unwrap_or(f64::NEG_INFINITY)
    }

    /// Log-likelihood and its gradient with respect to the model entries, by
    /// reverse-mode differentiation of the RK4 moment trajectory. `None` where
    /// the log-likelihood is `−∞`.
    pub fn log_likelihood_grad(&self, s: &Ssm) -> Option<(f64, SsmGrad)> {
        if s.dims() != self.dims() {
            return None;
        }
        let (q, n) = (self.q, self.x0.len());
        let m = self.realizations as f64;
        let s2 = self.sigma * self.sigma;
        let c = &s.c;
        let loss = |r: usize, integ: &MomentIntegrator, u: &[f64], dz: &mut [f64], grad: &mut SsmGrad| -> Result<f64> {
            let mut mu = vec![0.0; q];
            let mut cov = vec![0.0; q * q];
            integ.output_moments(u, &mut mu, &mut cov)?;
            let sigma = integ.state_cov()?;
            let mut sm = DMatrix::from_column_slice(q, q, &cov);
            for k in 0..q {
                sm[(k, k)] += s2;
            }
            let chol = sm.cholesky().ok_or(Error::NonFiniteMoments)?;
            let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let resid = &self.ybar[r] - DVector::from_column_slice(&mu);
            let s_inv = chol.inverse();
            let sr = &s_inv * &resid;
            let sws = &s_inv * &self.scatter[r] * &s_inv;
            let value = -0.5 * (m * (q as f64 * LN_2PI + ln_det) + (&s_inv * &self.scatter[r]).trace() + m * resid.dot(&sr));
            // ∂ℓ/∂S and ∂ℓ/∂μ
            let gs = (&s_inv * m - sws - &sr * sr.transpose() * m) * -0.5;
            let gmu = sr * m;
            let mean = DVector::from_column_slice(integ.mean());
            grad.c += &gmu * mean.transpose() + &gs * c * &sigma * 2.0;
            grad.d += &gmu * DVector::from_column_slice(u).transpose();
            let gsig = c.transpose() * &gs * c;
            let gm = c.transpose() * &gmu - &gsig * &mean * 2.0;
            dz[..n].copy_from_slice(gm.as_slice());
            dz[n..].copy_from_slice(gsig.as_slice());
            Ok(value)
        };
        let (v, g) = moment_functional_grad(s, &self.x0, &self.grid, &self.cache, &self.input, &self.nodes, BLOWUP, loss).ok()?;
        v.is_finite().then_some((v, g))
    }

    fn try_log_likelihood(&self, s: &Ssm) -> Result<f64> {
        if s.dims() != self.dims() {
            return Err(Error::DimensionMismatch("model and data dimensions differ".into()));
        }
        let q = self.q;
        let m = self.realizations as f64;
        let mut integ = MomentIntegrator::new(s, self.grid.dt);
        integ.reset(&self.x0);
        let mut mu = vec![0.0; q];
        let mut cov = vec![0.0; q * q];
        let s2 = self.sigma * self.sigma;
        let mut total = 0.0;
        let mut r = 0;
        let last = *self.nodes.last().unwrap_or(&0);
        for i in 0..=last {
            if i > 0 {
                integ.step(i - 1, &self.grid, &self.cache, &self.input);
                if !integ.is_finite() || integ.second().iter().any(|v| v.abs() > BLOWUP) {
                    return Err(Error::NonFiniteMoments);
                }
            }
            while r < self.nodes.len() && self.nodes[r] == i {
                integ.output_moments(self.cache.node(i), &mut mu, &mut cov)?;
                let mut sm = DMatrix::from_column_slice(q, q, &cov);
                for k in 0..q {
                    sm[(k, k)] += s2;
                }
                let chol = sm.cholesky().ok_or(Error::NonFiniteMoments)?;
                let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let resid = &self.ybar[r] - DVector::from_column_slice(&mu);
                let quad = resid.dot(&chol.solve(&resid));
                let tr = chol.solve(&self.scatter[r]).trace();
                total -= 0.5 * (m * (q as f64 * LN_2PI + ln_det) + tr + m * quad);
                r += 1;
            }
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::NonFiniteMoments)
        }
    }
}
