use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::param::Ssm;
use crate::sdesim::kernel::{matvec, matvec_add, Flat};
use crate::sdesim::{InputCache, InputSignal, TimeGrid};

/// Correlated Wiener increments: `Δw₁ = √dt z₁`, `Δw₂ = √dt (ρz₁ + √(1−ρ²) z₂)`.
/// Returned as a `2 × steps` matrix.
pub fn wiener_increments<R: Rng + ?Sized>(rho: f64, dt: f64, steps: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(-1.0..=1.0).contains(&rho) || !(dt > 0.0) {
        return Err(Error::DomainError(format!("rho = {rho}, dt = {dt}")));
    }
    let mut out = DMatrix::zeros(2, steps);
    for k in 0..steps {
        let (w1, w2) = increment(rho, dt.sqrt(), rng);
        out[(0, k)] = w1;
        out[(1, k)] = w2;
    }
    Ok(out)
}

#[inline]
fn increment<R: Rng + ?Sized>(rho: f64, sqdt: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let w1 = sqdt * z1;
    let w2 = if rho == 1.0 {
        w1
    } else if rho == -1.0 {
        -w1
    } else {
        sqdt * (rho * z1 + (1.0 - rho * rho).sqrt() * z2)
    };
    (w1, w2)
}

/// One simulated trajectory on every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    /// `n × len`.
    pub states: DMatrix<f64>,
    /// `q × len`.
    pub outputs: DMatrix<f64>,
}

/// Reusable Euler–Maruyama stepper.
pub(crate) struct Stepper<'a> {
    k: Flat,
    cache: &'a InputCache,
    dt: f64,
    x: Vec<f64>,
    next: Vec<f64>,
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(s: &Ssm, cache: &'a InputCache, dt: f64) -> Self {
        let k = Flat::new(s);
        let n = k.n;
        Self { k, cache, dt, x: vec![0.0; n], next: vec![0.0; n], tmp: vec![0.0; n] }
    }

    pub fn reset(&mut self, x0: &[f64]) {
        self.x.copy_from_slice(x0);
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    /// Advances from node `i` with increments `(dw1, dw2)`.
    #[inline]
    pub fn step(&mut self, i: usize, dw1: f64, dw2: f64) {
        let k = &self.k;
        let n = k.n;
        let u = self.cache.node(i);
        // drift: (Ax + Bu) dt
        matvec(&k.a, n, &self.x, &mut self.tmp);
        matvec_add(&k.b, n, u, &mut self.tmp);
        for j in 0..n {
            self.next[j] = self.x[j] + self.tmp[j] * self.dt;
        }
        matvec(&k.f, n, &self.x, &mut self.tmp);
        for j in 0..n {
            self.next[j] += self.tmp[j] * dw1;
        }
        matvec(&k.g, n, u, &mut self.tmp);
        for j in 0..n {
            self.next[j] += self.tmp[j] * dw2;
        }
        std::mem::swap(&mut self.x, &mut self.next);
    }

    /// `y = Cx + Du` at node `i`, written into `out`.
    #[inline]
    pub fn output(&self, i: usize, out: &mut [f64]) {
        let k = &self.k;
        matvec(&k.c, k.q, &self.x, out);
        matvec_add(&k.d, k.q, self.cache.node(i), out);
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }

    pub fn rho(&self) -> f64 {
        self.k.rho
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.k.n, self.k.q)
    }
}

fn check(s: &Ssm, x0: &[f64], u: &InputSignal) -> Result<()> {
    s.validate()?;
    let d = s.dims();
    if x0.len() != d.n || u.channels() != d.l {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} entries and u {} channels for n = {}, l = {}",
            x0.len(),
            u.channels(),
            d.n,
            d.l
        )));
    }
    Ok(())
}

/// Euler–Maruyama trajectory of the Itô SDE on every grid node.
pub fn euler_maruyama<R: Rng + ?Sized>(s: &Ssm, x0: &[f64], u: &InputSignal, grid: &TimeGrid, rng: &mut R) -> Result<Path> {
    let steps = grid.steps();
    let dw = wiener_increments(s.rho, grid.dt, steps, rng)?;
    euler_maruyama_with_increments(s, x0, u, grid, &dw)
}

/// Euler–Maruyama driven by given increments (`2 × steps`).
pub fn euler_maruyama_with_increments(s: &Ssm, x0: &[f64], u: &InputSignal, grid: &TimeGrid, dw: &DMatrix<f64>) -> Result<Path> {
    check(s, x0, u)?;
    let steps = grid.steps();
    if dw.shape() != (2, steps) {
        return Err(Error::DimensionMismatch(format!("increments {:?}, expected (2, {steps})", dw.shape())));
    }
    let cache = InputCache::new(u, grid);
    let mut st = Stepper::new(s, &cache, grid.dt);
    let (n, q) = st.dims();
    st.reset(x0);
    let mut states = DMatrix::zeros(n, steps + 1);
    let mut outputs = DMatrix::zeros(q, steps + 1);
    let mut y = vec![0.0; q];
    for i in 0..=steps {
        if i > 0 {
            st.step(i - 1, dw[(0, i - 1)], dw[(1, i - 1)]);
            if !st.is_finite() {
                return Err(Error::NonFiniteState(i));
            }
        }
        states.column_mut(i).copy_from_slice(st.state());
        st.output(i, &mut y);
        outputs.column_mut(i).copy_from_slice(&y);
    }
    Ok(Path { times: grid.times(), states, outputs })
}

/// Simulates one path and records outputs at `record` (sorted node indices) into `out` (`q` per node).
pub(crate) fn simulate_outputs<R: Rng + ?Sized>(
    st: &mut Stepper<'_>,
    x0: &[f64],
    steps: usize,
    dt: f64,
    record: &[usize],
    out: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let (_, q) = st.dims();
    let rho = st.rho();
    let sqdt = dt.sqrt();
    st.reset(x0);
    let mut r = 0;
    for i in 0..=steps {
        if i > 0 {
            let (w1, w2) = increment(rho, sqdt, rng);
            st.step(i - 1, w1, w2);
            if !st.is_finite() {
                return Err(Error::NonFiniteState(i));
            }
        }
        while r < record.len() && record[r] == i {
            st.output(i, &mut out[r * q..(r + 1) * q]);
            r += 1;
        }
        if r == record.len() {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Dims;
    use crate::priors::RngStream;

    #[test]
    fn perfectly_correlated_increments() {
        let dw = wiener_increments(1.0, 0.01, 100, &mut RngStream::new(0, 0).rng()).unwrap();
        assert!((0..100).all(|k| dw[(0, k)] == dw[(1, k)]));
    }

    #[test]
    fn increment_covariance() {
        let steps = 1_000_000;
        let dw = wiener_increments(0.3, 0.01, steps, &mut RngStream::new(1, 0).rng()).unwrap();
        let mut c = [0.0; 3];
        for k in 0..steps {
            c[0] += dw[(0, k)] * dw[(0, k)];
            c[1] += dw[(0, k)] * dw[(1, k)];
            c[2] += dw[(1, k)] * dw[(1, k)];
        }
        let c: Vec<f64> = c.iter().map(|v| v / steps as f64).collect();
        assert!((c[0] / 0.01 - 1.0).abs() < 0.01);
        assert!((c[2] / 0.01 - 1.0).abs() < 0.01);
        assert!((c[1] / 0.003 - 1.0).abs() < 0.03);
    }

    #[test]
    fn uncorrelated_increments() {
        let steps = 1_000_000;
        let dw = wiener_increments(0.0, 1.0, steps, &mut RngStream::new(2, 0).rng()).unwrap();
        let r: f64 = (0..steps).map(|k| dw[(0, k)] * dw[(1, k)]).sum::<f64>() / steps as f64;
        assert!(r.abs() < 0.01);
    }

    #[test]
    fn zero_initial_state_and_input_stay_zero() {
        let mut s = Ssm::zeros(Dims { n: 2, l: 1, q: 1 });
        s.a = -DMatrix::<f64>::identity(2, 2);
        s.f = DMatrix::identity(2, 2);
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let p = euler_maruyama(&s, &[0.0, 0.0], &InputSignal::Zero { l: 1 }, &grid, &mut RngStream::new(3, 0).rng()).unwrap();
        assert!(p.states.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_decay() {
        let mut s = Ssm::zeros(Dims { n: 2, l: 1, q: 1 });
        s.a = -DMatrix::<f64>::identity(2, 2);
        let dt = 1e-3;
        let grid = TimeGrid::new(0.0, 1.0, dt).unwrap();
        let x0 = [1.0, -2.0];
        let p = euler_maruyama(&s, &x0, &InputSignal::Zero { l: 1 }, &grid, &mut RngStream::new(4, 0).rng()).unwrap();
        let norm0 = 5.0_f64.sqrt();
        for (i, t) in p.times.iter().enumerate() {
            for j in 0..2 {
                assert!((p.states[(j, i)] - x0[j] * (-t).exp()).abs() < 5.0 * dt * norm0);
            }
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let mut s = Ssm::zeros(Dims { n: 1, l: 1, q: 1 });
        s.a[(0, 0)] = 1e6;
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let r = euler_maruyama(&s, &[1.0], &InputSignal::Zero { l: 1 }, &grid, &mut RngStream::new(5, 0).rng());
        assert!(matches!(r, Err(Error::NonFiniteState(_))));
    }
}
