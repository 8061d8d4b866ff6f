use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::param::Ssm;
use crate::sdesim::kernel::{matvec, matvec_add, Flat};
use crate::sdesim::{InputCache, InputSignal, TimeGrid};

/// Largest `h · rate` accepted for one RK4 step before it is subdivided.
const RK4_STABLE: f64 = 2.5;

/// First and second moments of the state and the implied output moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub times: Vec<f64>,
    /// `E[x]` at each recorded node.
    pub mean: Vec<DVector<f64>>,
    /// `E[xxᵀ]` at each recorded node.
    pub second: Vec<DMatrix<f64>>,
    /// `Cm + Du`.
    pub out_mean: Vec<DVector<f64>>,
    /// `CΣCᵀ` with `Σ = Π − mmᵀ` projected onto the PSD cone.
    pub out_cov: Vec<DMatrix<f64>>,
}

/// Right-hand side of the Itô moment equations, with reusable scratch space.
pub(crate) struct MomentRhs {
    pub(crate) k: Flat,
    bu: Vec<f64>,
    gu: Vec<f64>,
    fm: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl MomentRhs {
    pub fn new(s: &Ssm) -> Self {
        let k = Flat::new(s);
        let n = k.n;
        Self { k, bu: vec![0.0; n], gu: vec![0.0; n], fm: vec![0.0; n], x: vec![0.0; n * n], y: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.k.n
    }

    /// `z = [m; vec Π]`, `dz` receives the derivative.
    pub(crate) fn eval(&mut self, z: &[f64], u: &[f64], dz: &mut [f64]) {
        let n = self.k.n;
        let (m, pi) = z.split_at(n);
        let (dm, dpi) = dz.split_at_mut(n);
        let k = &self.k;
        matvec(&k.b, n, u, &mut self.bu);
        matvec(&k.g, n, u, &mut self.gu);
        matvec(&k.f, n, m, &mut self.fm);
        matvec(&k.a, n, m, dm);
        for i in 0..n {
            dm[i] += self.bu[i];
        }
        // X = AΠ, Y = FΠ
        for j in 0..n {
            let pcol = &pi[j * n..(j + 1) * n];
            let xcol = &mut self.x[j * n..(j + 1) * n];
            matvec(&k.a, n, pcol, xcol);
            let ycol = &mut self.y[j * n..(j + 1) * n];
            matvec(&k.f, n, pcol, ycol);
        }
        let rho = k.rho;
        for j in 0..n {
            for i in 0..n {
                // (Y Fᵀ)_{ij} = Σ_k Y_{ik} F_{jk}, (Π Aᵀ)_{ij} = Σ_k Π_{ik} A_{jk}
                let (mut yf, mut pa) = (0.0, 0.0);
                for kk in 0..n {
                    yf += self.y[kk * n + i] * k.f[kk * n + j];
                    pa += pi[kk * n + i] * k.a[kk * n + j];
                }
                dpi[j * n + i] = self.x[j * n + i]
                    + pa
                    + self.bu[i] * m[j]
                    + m[i] * self.bu[j]
                    + yf
                    + rho * (self.fm[i] * self.gu[j] + self.gu[i] * self.fm[j])
                    + self.gu[i] * self.gu[j];
            }
        }
    }
}

/// Recorded RK4 substeps: step size, starting state and the three stage inputs.
#[derive(Debug, Default)]
pub(crate) struct Tape {
    pub len: usize,
    pub l: usize,
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl Tape {
    fn push(&mut self, h: f64, z: &[f64], u0: &[f64], um: &[f64], u1: &[f64]) {
        self.len = z.len();
        self.l = u0.len();
        self.h.push(h);
        self.z.extend_from_slice(z);
        self.u.extend_from_slice(u0);
        self.u.extend_from_slice(um);
        self.u.extend_from_slice(u1);
    }

    pub fn steps(&self) -> usize {
        self.h.len()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.z[k * self.len..(k + 1) * self.len]
    }

    /// Stage input `j ∈ {0, 1, 2}` (start, midpoint, end) of substep `k`.
    pub fn input(&self, k: usize, j: usize) -> &[f64] {
        let o = (3 * k + j) * self.l;
        &self.u[o..o + self.l]
    }
}

/// RK4 integrator of the moment equations along a grid.
pub(crate) struct MomentIntegrator {
    rhs: MomentRhs,
    z: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    u_mid: Vec<f64>,
    u_a: Vec<f64>,
    u_b: Vec<f64>,
    substeps: usize,
}

impl MomentIntegrator {
    pub fn new(s: &Ssm, dt: f64) -> Self {
        let rhs = MomentRhs::new(s);
        let n = rhs.n();
        let len = n + n * n;
        let l = rhs.k.l;
        let substeps = ((dt * rhs.k.rate()) / RK4_STABLE).ceil().max(1.0) as usize;
        Self {
            rhs,
            z: vec![0.0; len],
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
            u_mid: vec![0.0; l],
            u_a: vec![0.0; l],
            u_b: vec![0.0; l],
            substeps,
        }
    }

    pub fn reset(&mut self, x0: &[f64]) {
        let n = self.rhs.n();
        self.z.fill(0.0);
        self.z[..n].copy_from_slice(x0);
        for j in 0..n {
            for i in 0..n {
                self.z[n + j * n + i] = x0[i] * x0[j];
            }
        }
    }

    fn rk4(&mut self, h: f64, u0: &[f64], umid: &[f64], u1: &[f64]) {
        let len = self.z.len();
        self.rhs.eval(&self.z, u0, &mut self.k1);
        for i in 0..len {
            self.tmp[i] = self.z[i] + 0.5 * h * self.k1[i];
        }
        self.rhs.eval(&self.tmp, umid, &mut self.k2);
        for i in 0..len {
            self.tmp[i] = self.z[i] + 0.5 * h * self.k2[i];
        }
        self.rhs.eval(&self.tmp, umid, &mut self.k3);
        for i in 0..len {
            self.tmp[i] = self.z[i] + h * self.k3[i];
        }
        self.rhs.eval(&self.tmp, u1, &mut self.k4);
        for i in 0..len {
            self.z[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Advances one grid step from node `i`.
    pub fn step(&mut self, i: usize, grid: &TimeGrid, cache: &InputCache, u: &InputSignal) {
        self.step_taped(i, grid, cache, u, None);
    }

    /// As [`step`](Self::step), appending every RK4 substep to `tape`.
    pub fn step_taped(&mut self, i: usize, grid: &TimeGrid, cache: &InputCache, u: &InputSignal, mut tape: Option<&mut Tape>) {
        if self.substeps == 1 {
            let (u0, um, u1) = (cache.half(2 * i), cache.half(2 * i + 1), cache.half(2 * i + 2));
            if let Some(t) = tape.as_deref_mut() {
                t.push(grid.dt, &self.z, u0, um, u1);
            }
            self.rk4(grid.dt, u0, um, u1);
            return;
        }
        let h = grid.dt / self.substeps as f64;
        let t = grid.time(i);
        let mut ua = std::mem::take(&mut self.u_a);
        let mut um = std::mem::take(&mut self.u_mid);
        let mut ub = std::mem::take(&mut self.u_b);
        for s in 0..self.substeps {
            let ts = t + s as f64 * h;
            u.eval_into(ts, &mut ua);
            u.eval_into(ts + 0.5 * h, &mut um);
            u.eval_into(ts + h, &mut ub);
            if let Some(t) = tape.as_deref_mut() {
                t.push(h, &self.z, &ua, &um, &ub);
            }
            self.rk4(h, &ua, &um, &ub);
        }
        self.u_a = ua;
        self.u_mid = um;
        self.u_b = ub;
    }

    pub(crate) fn rhs_mut(&mut self) -> &mut MomentRhs {
        &mut self.rhs
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite())
    }

    #[cfg(test)]
    pub(crate) fn state(&self) -> &[f64] {
        &self.z
    }

    pub fn mean(&self) -> &[f64] {
        &self.z[..self.rhs.n()]
    }

    pub fn second(&self) -> &[f64] {
        &self.z[self.rhs.n()..]
    }

    /// Output mean and covariance at the current state, input `u`.
    pub fn output_moments(&self, u: &[f64], mean_out: &mut [f64], cov_out: &mut [f64]) -> Result<()> {
        let k = &self.rhs.k;
        let (n, q) = (k.n, k.q);
        matvec(&k.c, q, self.mean(), mean_out);
        matvec_add(&k.d, q, u, mean_out);
        let sigma = self.state_cov()?;
        let c = DMatrix::from_column_slice(q, n, &k.c);
        let oc = &c * sigma * c.transpose();
        cov_out.copy_from_slice(oc.as_slice());
        Ok(())
    }

    /// `Π − mmᵀ`, projected onto the PSD cone.
    pub fn state_cov(&self) -> Result<DMatrix<f64>> {
        let n = self.rhs.n();
        let m = self.mean();
        let pi = self.second();
        let sigma = DMatrix::from_fn(n, n, |i, j| 0.5 * (pi[j * n + i] + pi[i * n + j]) - m[i] * m[j]);
        psd_project(sigma)
    }
}

fn psd_project(sigma: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if n == 1 {
        return Ok(sigma.map(|v| v.max(0.0)));
    }
    let eig = SymmetricEigen::try_new(sigma, f64::EPSILON, 10_000).ok_or(Error::NonFiniteMoments)?;
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return Ok(eig.recompose());
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Moments at the given (sorted) grid nodes.
pub fn propagate_moments_at(
    s: &Ssm,
    x0: &[f64],
    u: &InputSignal,
    grid: &TimeGrid,
    record: &[usize],
    cache: Option<&InputCache>,
) -> Result<Moments> {
    s.validate()?;
    let d = s.dims();
    if x0.len() != d.n || u.channels() != d.l {
        return Err(Error::DimensionMismatch("x0 or input does not match the model".into()));
    }
    if record.windows(2).any(|w| w[0] > w[1]) || record.last().is_some_and(|&r| r >= grid.len()) {
        return Err(Error::InvalidConfig("record indices must be sorted grid nodes".into()));
    }
    let owned;
    let cache = match cache {
        Some(c) => c,
        None => {
            owned = InputCache::new(u, grid);
            &owned
        }
    };
    let mut integ = MomentIntegrator::new(s, grid.dt);
    integ.reset(x0);
    let (n, q) = (d.n, d.q);
    let mut out = Moments {
        times: Vec::with_capacity(record.len()),
        mean: Vec::with_capacity(record.len()),
        second: Vec::with_capacity(record.len()),
        out_mean: Vec::with_capacity(record.len()),
        out_cov: Vec::with_capacity(record.len()),
    };
    let mut ym = vec![0.0; q];
    let mut yc = vec![0.0; q * q];
    let last = record.last().copied().unwrap_or(0);
    let mut r = 0;
    for i in 0..=last {
        if i > 0 {
            integ.step(i - 1, grid, cache, u);
            if !integ.is_finite() {
                return Err(Error::NonFiniteMoments);
            }
        }
        while r < record.len() && record[r] == i {
            integ.output_moments(cache.node(i), &mut ym, &mut yc)?;
            out.times.push(grid.time(i));
            out.mean.push(DVector::from_column_slice(integ.mean()));
            out.second.push(DMatrix::from_column_slice(n, n, integ.second()));
            out.out_mean.push(DVector::from_column_slice(&ym));
            out.out_cov.push(DMatrix::from_column_slice(q, q, &yc));
            r += 1;
        }
    }
    Ok(out)
}

/// Moments on every grid node, by classical RK4 at the grid step (subdivided
/// automatically when the step would be unstable).
pub fn propagate_moments(s: &Ssm, x0: &[f64], u: &InputSignal, grid: &TimeGrid) -> Result<Moments> {
    let all: Vec<usize> = (0..grid.len()).collect();
    propagate_moments_at(s, x0, u, grid, &all, None)
}
