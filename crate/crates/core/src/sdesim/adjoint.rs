//! Reverse-mode gradients of functionals of the RK4 moment trajectory.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::param::Ssm;
use crate::sdesim::kernel::matvec;
use crate::sdesim::moments::{MomentIntegrator, Tape};
use crate::sdesim::{InputCache, InputSignal, TimeGrid};

/// Gradient with respect to every model entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmGrad {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub rho: f64,
}

impl SsmGrad {
    pub fn zeros_like(s: &Ssm) -> Self {
        let z = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        Self { a: z(&s.a), b: z(&s.b), c: z(&s.c), d: z(&s.d), f: z(&s.f), g: z(&s.g), rho: 0.0 }
    }

    /// `⟨self, ds⟩` over all entries, with `ds` a model-shaped direction.
    pub fn contract(&self, ds: &Ssm) -> f64 {
        self.a.dot(&ds.a) + self.b.dot(&ds.b) + self.c.dot(&ds.c) + self.d.dot(&ds.d) + self.f.dot(&ds.f) + self.g.dot(&ds.g) + self.rho * ds.rho
    }
}

/// `out += α · op(X) op(Y)` for column-major `n × n` matrices.
fn mm_acc(x: &[f64], xt: bool, y: &[f64], yt: bool, n: usize, alpha: f64, out: &mut [f64]) {
    for j in 0..n {
        for k in 0..n {
            let ykj = if yt { y[j + k * n] } else { y[k + j * n] };
            if ykj == 0.0 {
                continue;
            }
            let s = alpha * ykj;
            for i in 0..n {
                let xik = if xt { x[k + i * n] } else { x[i + k * n] };
                out[i + j * n] += xik * s;
            }
        }
    }
}

/// Transposed Jacobians of the moment right-hand side.
struct Adjoint {
    n: usize,
    l: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    rho: f64,
    ws: Vec<f64>,
    wf: Vec<f64>,
    bu: Vec<f64>,
    gu: Vec<f64>,
    fm: Vec<f64>,
    v: Vec<f64>,
    ga: Vec<f64>,
    gb: Vec<f64>,
    gf: Vec<f64>,
    gg: Vec<f64>,
    grho: f64,
}

impl Adjoint {
    fn new(s: &Ssm) -> Self {
        let d = s.dims();
        let (n, l) = (d.n, d.l);
        Self {
            n,
            l,
            a: s.a.as_slice().to_vec(),
            b: s.b.as_slice().to_vec(),
            f: s.f.as_slice().to_vec(),
            g: s.g.as_slice().to_vec(),
            rho: s.rho,
            ws: vec![0.0; n * n],
            wf: vec![0.0; n * n],
            bu: vec![0.0; n],
            gu: vec![0.0; n],
            fm: vec![0.0; n],
            v: vec![0.0; n],
            ga: vec![0.0; n * n],
            gb: vec![0.0; n * l],
            gf: vec![0.0; n * n],
            gg: vec![0.0; n * l],
            grho: 0.0,
        }
    }

    /// Given the adjoint `adj` of `f(y, u)`, adds `(∂f/∂y)ᵀ adj` to `out`
    /// and `(∂f/∂θ)ᵀ adj` to the parameter accumulators.
    fn pullback(&mut self, y: &[f64], u: &[f64], adj: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (m, pi) = y.split_at(n);
        let (am, w) = adj.split_at(n);
        let (om, opi) = out.split_at_mut(n);
        for j in 0..n {
            for i in 0..n {
                self.ws[i + j * n] = w[i + j * n] + w[j + i * n];
            }
        }
        matvec(&self.b, n, u, &mut self.bu);
        matvec(&self.g, n, u, &mut self.gu);
        matvec(&self.f, n, m, &mut self.fm);

        // state: m̄ = Aᵀa_m + W_s Bu + ρ Fᵀ W_s Gu, Π̄ = AᵀW + WA + FᵀWF
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += self.a[k + i * n] * am[k] + self.ws[i + k * n] * self.bu[k];
            }
            om[i] += acc;
        }
        matvec(&self.ws, n, &self.gu, &mut self.v);
        for i in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += self.f[k + i * n] * self.v[k];
            }
            om[i] += self.rho * acc;
        }
        mm_acc(&self.a, true, w, false, n, 1.0, opi);
        mm_acc(w, false, &self.a, false, n, 1.0, opi);
        self.wf.fill(0.0);
        mm_acc(w, false, &self.f, false, n, 1.0, &mut self.wf);
        mm_acc(&self.f, true, &self.wf, false, n, 1.0, opi);

        // parameters; v = W_s Gu here
        for j in 0..n {
            for i in 0..n {
                self.ga[i + j * n] += am[i] * m[j];
            }
        }
        mm_acc(w, false, pi, true, n, 1.0, &mut self.ga);
        mm_acc(w, true, pi, false, n, 1.0, &mut self.ga);
        mm_acc(&self.wf, false, pi, true, n, 1.0, &mut self.gf);
        let mut wtf = std::mem::take(&mut self.wf);
        wtf.fill(0.0);
        mm_acc(w, true, &self.f, false, n, 1.0, &mut wtf);
        mm_acc(&wtf, false, pi, false, n, 1.0, &mut self.gf);
        self.wf = wtf;
        for j in 0..n {
            for i in 0..n {
                self.gf[i + j * n] += self.rho * self.v[i] * m[j];
            }
        }
        let mut wsm = vec![0.0; n];
        matvec(&self.ws, n, m, &mut wsm);
        let mut wsfm = vec![0.0; n];
        matvec(&self.ws, n, &self.fm, &mut wsfm);
        for j in 0..self.l {
            for i in 0..n {
                self.gb[i + j * n] += (am[i] + wsm[i]) * u[j];
                self.gg[i + j * n] += (self.rho * wsfm[i] + self.v[i]) * u[j];
            }
        }
        self.grho += self.fm.iter().zip(&self.v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Value and gradient of `Σ_r loss_r(z(t_{node_r}))` along the RK4 moment
/// trajectory from `x0`. `loss` receives the node position `r`, the integrator
/// at that node and the input there; it returns the node value, writes
/// `∂loss/∂z` into its slice and may add direct parameter gradients (e.g. for
/// `C`, `D`). Fails when the moments become non-finite or exceed `limit`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn moment_functional_grad<L>(
    s: &Ssm,
    x0: &[f64],
    grid: &TimeGrid,
    cache: &InputCache,
    u: &InputSignal,
    nodes: &[usize],
    limit: f64,
    mut loss: L,
) -> Result<(f64, SsmGrad)>
where
    L: FnMut(usize, &MomentIntegrator, &[f64], &mut [f64], &mut SsmGrad) -> Result<f64>,
{
    let n = s.dims().n;
    let len = n + n * n;
    let mut grad = SsmGrad::zeros_like(s);
    let mut integ = MomentIntegrator::new(s, grid.dt);
    integ.reset(x0);
    let mut tape = Tape::default();
    let last = nodes.last().copied().unwrap_or(0);
    let mut node_grads: Vec<(usize, Vec<f64>)> = Vec::with_capacity(nodes.len());
    let mut total = 0.0;
    let mut r = 0;
    for i in 0..=last {
        if i > 0 {
            integ.step_taped(i - 1, grid, cache, u, Some(&mut tape));
            if !integ.is_finite() || integ.second().iter().any(|v| v.abs() > limit) {
                return Err(Error::NonFiniteMoments);
            }
        }
        while r < nodes.len() && nodes[r] == i {
            let mut dz = vec![0.0; len];
            total += loss(r, &integ, cache.node(i), &mut dz, &mut grad)?;
            node_grads.push((i, dz));
            r += 1;
        }
    }
    if last == 0 {
        return Ok((total, grad));
    }
    let per_step = tape.steps() / last;
    let mut adj = Adjoint::new(s);
    let mut lam = vec![0.0; len];
    let mut next = vec![0.0; len];
    let (mut k1, mut k2, mut k3) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let (mut y2, mut y3, mut y4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let (mut a1, mut a2, mut a3, mut a4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut ng = node_grads.len();
    for k in (0..tape.steps()).rev() {
        if (k + 1) % per_step == 0 {
            let node = (k + 1) / per_step;
            while ng > 0 && node_grads[ng - 1].0 == node {
                for (l, g) in lam.iter_mut().zip(&node_grads[ng - 1].1) {
                    *l += g;
                }
                ng -= 1;
            }
        }
        let h = tape.h[k];
        let z = tape.state(k);
        let (u0, um, u1) = (tape.input(k, 0), tape.input(k, 1), tape.input(k, 2));
        let rhs = integ.rhs_mut();
        rhs.eval(z, u0, &mut k1);
        for i in 0..len {
            y2[i] = z[i] + 0.5 * h * k1[i];
        }
        rhs.eval(&y2, um, &mut k2);
        for i in 0..len {
            y3[i] = z[i] + 0.5 * h * k2[i];
        }
        rhs.eval(&y3, um, &mut k3);
        for i in 0..len {
            y4[i] = z[i] + h * k3[i];
        }
        next.copy_from_slice(&lam);
        for i in 0..len {
            a4[i] = h / 6.0 * lam[i];
            a3[i] = h / 3.0 * lam[i];
            a2[i] = h / 3.0 * lam[i];
            a1[i] = h / 6.0 * lam[i];
        }
        let mut ybar = vec![0.0; len];
        adj.pullback(&y4, u1, &a4, &mut ybar);
        for i in 0..len {
            next[i] += ybar[i];
            a3[i] += h * ybar[i];
        }
        ybar.fill(0.0);
        adj.pullback(&y3, um, &a3, &mut ybar);
        for i in 0..len {
            next[i] += ybar[i];
            a2[i] += 0.5 * h * ybar[i];
        }
        ybar.fill(0.0);
        adj.pullback(&y2, um, &a2, &mut ybar);
        for i in 0..len {
            next[i] += ybar[i];
            a1[i] += 0.5 * h * ybar[i];
        }
        ybar.fill(0.0);
        adj.pullback(z, u0, &a1, &mut ybar);
        for i in 0..len {
            next[i] += ybar[i];
        }
        std::mem::swap(&mut lam, &mut next);
    }
    let d = s.dims();
    grad.a += DMatrix::from_column_slice(n, n, &adj.ga);
    grad.b += DMatrix::from_column_slice(n, d.l, &adj.gb);
    grad.f += DMatrix::from_column_slice(n, n, &adj.gf);
    grad.g += DMatrix::from_column_slice(n, d.l, &adj.gg);
    grad.rho += adj.grho;
    Ok((total, grad))
}
