//! Invariants of the stable parametrizations and priors, checked over random draws.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use stable_ssm::matfound::{
    is_mean_square_stable, is_positive_definite, lyapunov_residual, max_eig_sym, solve_gen_lyapunov, spectral_abscissa, SpdMatrix,
};
use stable_ssm::param::{
    assemble_brl_matrix, brl_params_from_ssm, params_from_stable_pair, ssm_from_brl_params, stable_pair_from_params, QMode, StablePairParams,
};
use stable_ssm::priors::{
    sample_wns, sample_wns_brl, CovSpec, GainPrior, MeanSpec, OrthPrior, QPrior, RngStream, ScalarPrior, WnsBrlConfig, WnsBrlPrior, WnsConfig,
    WnsPrior,
};

fn q_prior(variant: usize, n: usize) -> QPrior {
    match variant {
        0 => QPrior::Fixed { q: CovSpec::Isotropic(1.0) },
        1 => QPrior::Wishart { k_q: n as f64 + 1.0, sigma_q: CovSpec::Isotropic(2.0) },
        _ => QPrior::AlphaP { k_alpha: 2.0, theta_alpha: 0.5 },
    }
}

fn wns(n: usize, variant: usize, sigma_f: f64) -> WnsConfig {
    WnsConfig {
        n,
        k_p: n as f64 + 2.0,
        sigma_p: CovSpec::Isotropic(1.0),
        mu_f: MeanSpec::Constant(0.2),
        sigma_f: CovSpec::Isotropic(sigma_f),
        mu_s: MeanSpec::Constant(0.0),
        sigma_s: CovSpec::Isotropic(1.0),
        q: q_prior(variant, n),
    }
}

fn brl(n: usize, l: usize, q: usize, variant: usize, cayley: bool, dirichlet: bool, gamma: f64) -> WnsBrlConfig {
    let unit = || CovSpec::Isotropic(1.0);
    WnsBrlConfig {
        base: wns(n, variant, 1.0),
        l,
        q,
        mu_c: MeanSpec::Constant(0.0),
        sigma_c: CovSpec::Isotropic(1.5),
        gamma: ScalarPrior::Fixed { value: gamma },
        rho: ScalarPrior::Uniform { lo: -0.9, hi: 0.9 },
        eps: 1e-4,
        orth: if cayley {
            OrthPrior::Cayley { mu_u: MeanSpec::Constant(0.0), sigma_u: unit(), mu_v: MeanSpec::Constant(0.0), sigma_v: unit() }
        } else {
            OrthPrior::Acg { sigma_u: unit(), sigma_v: unit() }
        },
        gain: if dirichlet { GainPrior::Dirichlet { alpha: [1.0; 3] } } else { GainPrior::ZBall },
    }
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wns_draws_solve_their_lyapunov_equation(seed in any::<u64>(), n in 1usize..=5, variant in 0usize..3, sigma_f in 0.1f64..4.0) {
        let prior = WnsPrior::from_config(&wns(n, variant, sigma_f)).unwrap();
        let mut rng = RngStream::new(seed, 0).rng();
        let (params, a, f) = sample_wns(&prior, &mut rng).unwrap();
        let p = params.p().unwrap();
        let q = params.q().unwrap();
        let res = lyapunov_residual(&a, &f, p.matrix(), q.matrix()).norm();
        prop_assert!(res <= 1e-9 * q.matrix().norm(), "residual {res}");
        prop_assert!(is_mean_square_stable(&a, &f).unwrap().stable);
    }

    #[test]
    fn brl_draws_satisfy_the_bounded_real_condition(
        seed in any::<u64>(),
        n in 1usize..=4,
        l in 1usize..=3,
        q in 1usize..=3,
        variant in 0usize..3,
        cayley in any::<bool>(),
        dirichlet in any::<bool>(),
        gamma in 0.2f64..5.0,
    ) {
        let prior = WnsBrlPrior::from_config(&brl(n, l, q, variant, cayley, dirichlet, gamma)).unwrap();
        let mut rng = RngStream::new(seed, 1).rng();
        let (params, s, p) = sample_wns_brl(&prior, &mut rng).unwrap();
        let m = assemble_brl_matrix(&s, &p, params.gamma);
        prop_assert!(max_eig_sym(&m).unwrap() < 0.0);
        let rhs = params.q().unwrap().into_matrix() + params.c.transpose() * &params.c;
        let res = lyapunov_residual(&s.a, &s.f, p.matrix(), &rhs).norm();
        prop_assert!(res <= 1e-9 * rhs.norm(), "residual {res}");
    }

    #[test]
    fn brl_maps_are_mutually_inverse(seed in any::<u64>(), n in 1usize..=4, l in 1usize..=3, q in 1usize..=3, cayley in any::<bool>()) {
        let prior = WnsBrlPrior::from_config(&brl(n, l, q, 1, cayley, false, 2.0)).unwrap();
        let mut rng = RngStream::new(seed, 2).rng();
        let (params, s, p) = sample_wns_brl(&prior, &mut rng).unwrap();
        let back = brl_params_from_ssm(&s, &p, params.gamma).unwrap();
        let (s2, p2) = ssm_from_brl_params(&back).unwrap();
        for (x, y) in [(&s.a, &s2.a), (&s.b, &s2.b), (&s.c, &s2.c), (&s.d, &s2.d), (&s.f, &s2.f), (&s.g, &s2.g)] {
            prop_assert!(max_abs_diff(x, y) <= 1e-8);
        }
        prop_assert!(max_abs_diff(p.matrix(), p2.matrix()) <= 1e-8);
        prop_assert!(max_abs_diff(params.p_inv.matrix(), back.p_inv.matrix()) <= 1e-8);
        prop_assert!(max_abs_diff(&params.ftil, &back.ftil) <= 1e-8);
        prop_assert!(max_abs_diff(&params.s.matrix(), &back.s.matrix()) <= 1e-8);
        prop_assert!((params.rho - back.rho).abs() <= 1e-12);
    }

    #[test]
    fn stable_pair_maps_are_mutually_inverse(seed in any::<u64>(), n in 1usize..=5) {
        let prior = WnsPrior::from_config(&wns(n, 1, 1.0)).unwrap();
        let mut rng = RngStream::new(seed, 3).rng();
        let (params, a, f) = sample_wns(&prior, &mut rng).unwrap();
        let q = params.q().unwrap();
        let back = params_from_stable_pair(&a, &f, &q).unwrap();
        let (a2, f2) = stable_pair_from_params(&back).unwrap();
        prop_assert!(max_abs_diff(&a, &a2) <= 1e-8);
        prop_assert!(max_abs_diff(&f, &f2) <= 1e-8);
        prop_assert!(max_abs_diff(params.p_inv.matrix(), back.p_inv.matrix()) <= 1e-8);
    }

    #[test]
    fn stability_oracles_agree(seed in any::<u64>(), n in 1usize..=4, shift in -1.0f64..2.0, f_scale in 0.0f64..3.0) {
        let mut rng = RngStream::new(seed, 4).rng();
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = DMatrix::from_fn(n, n, |_, _| f_scale * rng.sample::<f64, _>(StandardNormal));
        let centre = spectral_abscissa(&a).unwrap() + shift;
        for i in 0..n {
            a[(i, i)] -= centre;
        }
        let verdict = is_mean_square_stable(&a, &f).unwrap();
        prop_assume!(verdict.abscissa.abs() >= 1e-6);
        let pd = solve_gen_lyapunov(&a, &f, &SpdMatrix::identity(n)).map(|p| is_positive_definite(&p, 0.0)).unwrap_or(false);
        prop_assert_eq!(verdict.stable, pd);
    }
}

#[test]
fn alpha_p_draws_decay_at_their_rate() {
    let prior = WnsPrior::from_config(&wns(3, 2, 1.0)).unwrap();
    let mut rng = RngStream::new(7, 0).rng();
    for _ in 0..20 {
        let (params, a, f) = sample_wns(&prior, &mut rng).unwrap();
        let QMode::AlphaP(alpha) = params.qmode else { panic!("expected an alpha-P draw") };
        let lhs = lyapunov_residual(&a, &f, params.p().unwrap().matrix(), &DMatrix::zeros(3, 3));
        let target = params.p().unwrap().into_matrix() * -alpha;
        assert!(max_abs_diff(&lhs, &target) <= 1e-9 * target.norm());
    }
}

#[test]
fn fixed_q_parameters_reproduce_given_pair() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -2.0]);
    let f = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.4]);
    let q = SpdMatrix::identity(2);
    let params = params_from_stable_pair(&a, &f, &q).unwrap();
    assert!(matches!(params.qmode, QMode::Fixed(_) | QMode::Random(_)));
    let (a2, f2) = stable_pair_from_params(&StablePairParams { qmode: QMode::Fixed(q), ..params }).unwrap();
    assert!(max_abs_diff(&a, &a2) < 1e-10);
    assert!(max_abs_diff(&f, &f2) < 1e-10);
}
