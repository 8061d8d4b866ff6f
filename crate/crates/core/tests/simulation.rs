//! Simulator behaviour against closed forms and against each other.

use nalgebra::{DMatrix, DVector};
use stable_ssm::matfound::moment_operator;
use proptest::prelude::*;
use stable_ssm::param::Ssm;
use stable_ssm::priors::{sample_wns, CovSpec, MeanSpec, QPrior, RngStream, WnsConfig, WnsPrior};
use stable_ssm::sdesim::{
    euler_maruyama, euler_maruyama_with_increments, make_fourier_input, propagate_moments, propagate_moments_at, simulate_ensemble,
    wiener_increments, InputSignal, TimeGrid,
};

fn m1(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn two_state(f_scale: f64, g_scale: f64, rho: f64) -> Ssm {
    Ssm::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, -0.2, -1.5]),
        DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
        DMatrix::from_row_slice(1, 2, &[1.0, -0.5]),
        m1(0.1),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.4]) * f_scale,
        DMatrix::from_column_slice(2, 1, &[0.3, 0.2]) * g_scale,
        rho,
    )
    .unwrap()
}

fn sum_pairs(dw: &DMatrix<f64>, factor: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2, dw.ncols() / factor, |r, j| (0..factor).map(|k| dw[(r, j * factor + k)]).sum())
}

#[test]
fn strong_error_shrinks_with_dt() {
    let s = two_state(1.0, 0.0, 0.0);
    let (t_end, dt, paths) = (1.0, 1.0 / 32.0, 400);
    let reference = TimeGrid::new(0.0, t_end, dt / 16.0).unwrap();
    let coarse = TimeGrid::new(0.0, t_end, dt).unwrap();
    let fine = TimeGrid::new(0.0, t_end, dt / 2.0).unwrap();
    let u = InputSignal::Zero { l: 1 };
    let x0 = [1.0, -1.0];
    let (mut e_coarse, mut e_fine) = (0.0, 0.0);
    for p in 0..paths {
        let mut rng = RngStream::new(11, 0).child(p).rng();
        let dw = wiener_increments(0.0, reference.dt, reference.steps(), &mut rng).unwrap();
        let end = |grid: &TimeGrid, inc: &DMatrix<f64>| {
            let path = euler_maruyama_with_increments(&s, &x0, &u, grid, inc).unwrap();
            path.states.column(grid.steps()).clone_owned()
        };
        let x_ref = end(&reference, &dw);
        e_coarse += (end(&coarse, &sum_pairs(&dw, 16)) - &x_ref).norm();
        e_fine += (end(&fine, &sum_pairs(&dw, 8)) - &x_ref).norm();
    }
    let ratio = e_coarse / e_fine;
    assert!((1.2..=2.8).contains(&ratio), "strong error ratio {ratio}");
}

#[test]
fn deterministic_path_follows_exponential() {
    let s = Ssm::new(-DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::identity(1, 2), m1(0.0), DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 0.0)
        .unwrap();
    let dt = 1e-3;
    let grid = TimeGrid::new(0.0, 1.0, dt).unwrap();
    let x0 = [2.0, -1.0];
    let path = euler_maruyama(&s, &x0, &InputSignal::Zero { l: 1 }, &grid, &mut RngStream::new(1, 0).rng()).unwrap();
    let moments = propagate_moments(&s, &x0, &InputSignal::Zero { l: 1 }, &grid).unwrap();
    let x0_norm = (x0[0] * x0[0] + x0[1] * x0[1]).sqrt();
    for (i, t) in grid.times().into_iter().enumerate() {
        for (j, x) in x0.iter().enumerate() {
            let exact = (-t).exp() * x;
            assert!((path.states[(j, i)] - exact).abs() < 5.0 * dt * x0_norm);
            assert!((moments.mean[i][j] - exact).abs() < 1e-8);
        }
        assert!(moments.out_cov[i][(0, 0)].abs() < 1e-12);
    }
}

#[test]
fn ensemble_matches_moments_for_input_driven_model() {
    let s = two_state(1.0, 1.0, 0.4);
    let grid = TimeGrid::new(0.0, 1.5, 1e-3).unwrap();
    let u = make_fourier_input(1, 3, 1.5, &mut RngStream::new(3, 0).rng()).unwrap();
    let record: Vec<usize> = (1..=5).map(|k| k * 300).collect();
    let x0 = [0.5, 0.5];
    let em = simulate_ensemble(&s, &x0, &u, &grid, 4000, RngStream::new(3, 1), Some(&record)).unwrap();
    let mo = propagate_moments_at(&s, &x0, &u, &grid, &record, None).unwrap();
    for k in 0..record.len() {
        let zm = (em.mean[(0, k)] - mo.out_mean[k][0]).abs() / em.mean_se[(0, k)];
        let zv = (em.var[(0, k)] - mo.out_cov[k][(0, 0)]).abs() / em.var_se[(0, k)];
        assert!(zm < 4.0 && zv < 4.0, "checkpoint {k}: mean z {zm}, variance z {zv}");
    }
}

#[test]
fn mean_square_energy_decays_for_alpha_p_draws() {
    let cfg = WnsConfig {
        n: 3,
        k_p: 5.0,
        sigma_p: CovSpec::Isotropic(1.0),
        mu_f: MeanSpec::Constant(0.0),
        sigma_f: CovSpec::Isotropic(1.0),
        mu_s: MeanSpec::Constant(0.0),
        sigma_s: CovSpec::Isotropic(1.0),
        q: QPrior::AlphaP { k_alpha: 2.0, theta_alpha: 0.5 },
    };
    let prior = WnsPrior::from_config(&cfg).unwrap();
    let mut rng = RngStream::new(5, 0).rng();
    for _ in 0..10 {
        let (params, a, f) = sample_wns(&prior, &mut rng).unwrap();
        let alpha = match params.qmode {
            stable_ssm::param::QMode::AlphaP(alpha) => alpha,
            _ => unreachable!(),
        };
        let p = params.p().unwrap().into_matrix();
        let eig = p.clone().symmetric_eigenvalues();
        let cond = eig.max() / eig.min();
        let s = Ssm::new(a, DMatrix::zeros(3, 1), DMatrix::zeros(1, 3), m1(0.0), f, DMatrix::zeros(3, 1), 0.0).unwrap();
        let t_end = ((3.0 / alpha).min(10.0) * 100.0).round() / 100.0;
        let grid = TimeGrid::new(0.0, t_end, 1e-3).unwrap();
        let x0 = [1.0, 0.5, -1.0];
        let mo = propagate_moments(&s, &x0, &InputSignal::Zero { l: 1 }, &grid).unwrap();
        let v0 = mo.second[0].component_mul(&p).sum();
        for (i, t) in grid.times().into_iter().enumerate() {
            let energy = mo.second[i].trace();
            assert!(energy <= 1.2 * cond * (-alpha * t).exp() * 2.25 + 1e-12);
            let v = mo.second[i].component_mul(&p).sum();
            assert!((v - v0 * (-alpha * t).exp()).abs() <= 1e-8 * v0);
        }
    }
}

#[test]
fn second_moment_matches_operator_exponential_over_long_horizons() {
    let cfg = WnsConfig {
        n: 3,
        k_p: 5.0,
        sigma_p: CovSpec::Isotropic(1.0),
        mu_f: MeanSpec::Constant(0.0),
        sigma_f: CovSpec::Isotropic(1.0),
        mu_s: MeanSpec::Constant(0.0),
        sigma_s: CovSpec::Isotropic(1.0),
        q: QPrior::Wishart { k_q: 4.0, sigma_q: CovSpec::Isotropic(1.0) },
    };
    let prior = WnsPrior::from_config(&cfg).unwrap();
    let mut rng = RngStream::new(6, 0).rng();
    let x0 = DVector::from_vec(vec![1.0, 0.5, -1.0]);
    let pi0 = &x0 * x0.transpose();
    let grid = TimeGrid::new(0.0, 6.0, 1e-3).unwrap();
    for _ in 0..10 {
        let (_, a, f) = sample_wns(&prior, &mut rng).unwrap();
        let op = moment_operator(&a, &f);
        let s = Ssm::new(a, DMatrix::zeros(3, 1), DMatrix::zeros(1, 3), m1(0.0), f, DMatrix::zeros(3, 1), 0.0).unwrap();
        let mo = propagate_moments(&s, x0.as_slice(), &InputSignal::Zero { l: 1 }, &grid).unwrap();
        for t in [1.0, 3.0, 6.0] {
            let exact = (&op * t).exp() * DVector::from_column_slice(pi0.as_slice());
            let got = &mo.second[grid.index_of(t).unwrap()];
            let err = (DVector::from_column_slice(got.as_slice()) - &exact).norm();
            assert!(err <= 1e-8 * pi0.norm(), "t {t}: error {err}");
        }
    }
}

#[test]
fn scalar_second_moment_closed_form() {
    let s = Ssm::new(m1(-1.0), m1(0.0), m1(1.0), m1(0.0), m1(1.0), m1(0.0), 0.0).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 1e-3).unwrap();
    let mo = propagate_moments(&s, &[1.0], &InputSignal::Zero { l: 1 }, &grid).unwrap();
    for (i, t) in grid.times().into_iter().enumerate() {
        assert!((mo.second[i][(0, 0)] - (-t).exp()).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_state_and_input_stay_at_zero(seed in any::<u64>(), f_scale in 0.0f64..2.0, rho in -0.99f64..0.99) {
        let s = two_state(f_scale, 1.0, rho);
        let grid = TimeGrid::new(0.0, 0.5, 1e-2).unwrap();
        let path = euler_maruyama(&s, &[0.0, 0.0], &InputSignal::Zero { l: 1 }, &grid, &mut RngStream::new(seed, 0).rng()).unwrap();
        prop_assert!(path.states.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ensemble_is_independent_of_thread_scheduling(seed in any::<u64>()) {
        let s = two_state(1.0, 1.0, 0.2);
        let grid = TimeGrid::new(0.0, 0.2, 1e-2).unwrap();
        let u = make_fourier_input(1, 2, 0.2, &mut RngStream::new(seed, 0).rng()).unwrap();
        let a = simulate_ensemble(&s, &[1.0, 0.0], &u, &grid, 16, RngStream::new(seed, 1), None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_ensemble(&s, &[1.0, 0.0], &u, &grid, 16, RngStream::new(seed, 1), None).unwrap());
        prop_assert_eq!(a.mean, b.mean);
        prop_assert_eq!(a.var, b.var);
    }

    #[test]
    fn moment_covariance_is_positive_semidefinite(f_scale in 0.0f64..2.0, g_scale in 0.0f64..2.0, rho in -0.99f64..0.99) {
        let s = two_state(f_scale, g_scale, rho);
        let grid = TimeGrid::new(0.0, 1.0, 1e-2).unwrap();
        let u = make_fourier_input(1, 2, 1.0, &mut RngStream::new(9, 0).rng()).unwrap();
        let mo = propagate_moments(&s, &[1.0, -1.0], &u, &grid).unwrap();
        for c in &mo.out_cov {
            prop_assert!(c[(0, 0)] >= 0.0);
        }
        for (pi, m) in mo.second.iter().zip(&mo.mean) {
            let cov = pi - m * m.transpose();
            prop_assert!(cov.symmetric_eigenvalues().min() >= -1e-9 * pi.norm().max(1.0));
        }
    }
}
