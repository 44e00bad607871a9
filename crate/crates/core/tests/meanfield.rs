use std::sync::OnceLock;

use cyclegas::free_gas::{free_density, free_pressure, free_rho_short, FreeGasParams};
use cyclegas::kernels::{pi_star0, ModifiedEnsembleParams};
use cyclegas::meanfield::{entropy_term, free_equilibrium_measure, rate_function, rho_short_analytic};
use cyclegas::{Error, KernelSpec, MeanField, ModelParams, MomentumMeasure, Regime, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ζ(3/2)(4π)^{-3/2}
const CRITICAL_3D: f64 = 0.058_643_621_347_644_42;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn standard() -> ModifiedEnsembleParams {
    ModifiedEnsembleParams::standard(1.0).unwrap()
}

fn ens(q: usize, lambda: f64) -> ModifiedEnsembleParams {
    ModifiedEnsembleParams::new(q, lambda, 1.0).unwrap()
}

fn gaussian() -> KernelSpec {
    KernelSpec::Gaussian { v0: 1.0, c: 1.0 }
}

fn exponential() -> KernelSpec {
    KernelSpec::Exponential { v0: 1.0, c: 1.0 }
}

/// Gaussian benchmark (a = 1, β = 1) on the default grid for μ up to 0.5.
fn gaussian_model() -> &'static MeanField {
    static MF: OnceLock<MeanField> = OnceLock::new();
    MF.get_or_init(|| MeanField::with_default_grid(ModelParams::new(1.0, 0.5, 1.0, gaussian())).unwrap())
}

fn bare(mu: f64, a: f64) -> MeanField {
    MeanField::with_default_grid(ModelParams::new(1.0, mu, a, KernelSpec::None)).unwrap()
}

fn free_params(alpha: f64) -> FreeGasParams {
    FreeGasParams::new(alpha, 1.0, 3).unwrap()
}

/// Root of `N = ν⁰_e(μ − aN)` on the solver's own grid, by bisection.
fn scalar_fixed_point(mf: &MeanField, mu: f64, a: f64) -> f64 {
    let f = |n: f64| free_density(&free_params(mu - a * n), &mf.grid).unwrap() - n;
    let (mut lo, mut hi) = (0.0, CRITICAL_3D.max(mu / a) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn bare_mean_field_matches_scalar_fixed_point() {
    // 40-digit roots of N = Li_{3/2}(e^{μ−N})(4π)^{-3/2}.
    for (mu, frozen) in [(-0.1, 0.033_874_309_980_976_64), (-1.0, 0.009_510_483_743_220_22)] {
        let mf = bare(mu, 1.0);
        let sol = mf.solve(&standard(), &opts()).unwrap();
        assert_eq!(sol.regime, Regime::Normal);
        let n = sol.measure.total_mass(&mf.grid).unwrap();
        assert!((n - scalar_fixed_point(&mf, mu, 1.0)).abs() < 1e-12 * n);
        assert!((n - frozen).abs() < 1e-8 * frozen, "mu={mu}: {n}");
        let shifted = free_params(mu - n);
        for (i, &k) in mf.grid.nodes.iter().enumerate() {
            let bose = 1.0 / (k * k - shifted.alpha).exp_m1();
            assert!((sol.measure.continuous[i] / bose - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn bare_mean_field_condensate() {
    let mf = bare(0.5, 1.0);
    let sol = mf.solve(&standard(), &opts()).unwrap();
    assert_eq!(sol.regime, Regime::Condensed);
    // μ/a − ζ(3/2)(4π)^{-3/2}
    assert!((sol.nu_c() - 0.441_356_378_652_355_6).abs() < 1e-8, "{}", sol.nu_c());
    let nu_e = sol.measure.excited_mass(&mf.grid).unwrap();
    assert!((nu_e - CRITICAL_3D).abs() < 1e-8);
    let (onset, _) = mf.onset(&standard(), &opts()).unwrap();
    assert!((onset - CRITICAL_3D).abs() < 1e-8);
}

#[test]
fn weak_mean_field_approaches_free_gas() {
    let alpha = -0.5;
    let mf = bare(alpha, 1e-6);
    let sol = mf.solve(&standard(), &opts()).unwrap();
    let fp = free_params(alpha);
    let p0 = free_pressure(&fp, &mf.grid).unwrap();
    let n0 = free_density(&fp, &mf.grid).unwrap();
    assert!((sol.pressure - p0).abs() < 1e-4 * p0);
    assert!((sol.measure.total_mass(&mf.grid).unwrap() - n0).abs() < 1e-4 * n0);
}

#[test]
fn gaussian_kernel_condenses_in_window() {
    let mf = gaussian_model();
    let sol = mf.solve(&standard(), &opts()).unwrap();
    assert_eq!(sol.regime, Regime::Condensed);
    assert!(sol.nu_c() > 0.1);
    assert!(sol.effective_field.iter().all(|&g| g > 0.0));
    let (el, g0) = mf.euler_lagrange_residual(&sol).unwrap();
    assert!(el <= 1e-9 && g0 <= 1e-9);
    let normal = mf.solve_at(-0.5, &standard(), &opts()).unwrap();
    assert_eq!(normal.regime, Regime::Normal);
    assert_eq!(normal.nu_c(), 0.0);
    assert!(normal.field_at_origin > 0.0);
}

#[test]
fn exponential_kernel_has_no_normal_phase_above_onset() {
    let params = ModelParams::new(1.0, 10.0, 1.0, exponential());
    let mf = MeanField::with_default_grid(params).unwrap();
    let (onset, _) = mf.onset(&standard(), &opts()).unwrap();
    assert!(onset > 0.0 && onset < 0.1);
    for mu in [0.1, 1.0, 10.0] {
        let (regime, _) = mf.classify(mu, &standard(), &opts()).unwrap();
        assert_eq!(regime, Regime::Condensed, "mu={mu}");
    }
    // The macroscopic occupation cannot be an atom at k = 0: the field would turn
    // negative near the origin.
    assert!(matches!(
        mf.solve_at(1.0, &standard(), &opts()),
        Err(Error::InfeasibleField(_))
    ));
    let below = mf.solve_at(0.05, &standard(), &opts()).unwrap();
    assert_eq!(below.regime, Regime::Normal);
}

#[test]
fn equilibrium_minimizes_the_functional() {
    let mf = gaussian_model();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mu in [0.5, -0.5] {
        let sol = mf.solve_at(mu, &standard(), &opts()).unwrap();
        let e0 = mf.grand_potential_with_mu(&sol.measure, &standard(), mu).unwrap();
        assert!((e0 + sol.pressure).abs() < 1e-13);
        for trial in 0..100 {
            let amp = [1e-1, 1e-2, 1e-3][trial % 3];
            let mut m = sol.measure.clone();
            for v in m.continuous.iter_mut() {
                *v *= 1.0 + amp * rng.random_range(-0.5..0.5);
            }
            let dc: f64 = amp * rng.random_range(-0.5..0.5) * sol.nu_c().max(0.1);
            m.condensate = (m.condensate + dc).max(0.0);
            let e = mf.grand_potential_with_mu(&m, &standard(), mu).unwrap();
            assert!(e >= e0 - 1e-10, "mu={mu} trial={trial}: {e} < {e0}");
        }
    }
}

#[test]
fn duality_route_is_independent_of_reference_alpha() {
    let mf = gaussian_model();
    for mu in [0.5, -0.5] {
        let sol = mf.solve_at(mu, &standard(), &opts()).unwrap();
        for alpha in [-0.1, -1.0, -10.0] {
            let p = mf.variational_pressure(&sol.measure, alpha, mu, &standard()).unwrap();
            assert!(
                (p - sol.pressure).abs() <= 1e-8 * sol.pressure.abs(),
                "mu={mu} alpha={alpha}"
            );
        }
    }
}

#[test]
fn rate_function_properties() {
    let mf = gaussian_model();
    let grid = &mf.grid;
    let alpha = -0.3;
    let fp = free_params(alpha);
    let eq = free_equilibrium_measure(&fp, &standard(), grid).unwrap();
    assert!(rate_function(&eq, &fp, &standard(), grid).unwrap().abs() <= 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = MomentumMeasure {
            condensate: rng.random_range(0.0..0.2),
            continuous: eq.continuous.iter().map(|v| v * rng.random_range(0.0..3.0)).collect(),
        };
        assert!(rate_function(&m, &fp, &standard(), grid).unwrap() >= -1e-8);
    }

    let delta = 0.07;
    let with_atom = MomentumMeasure {
        condensate: delta,
        continuous: eq.continuous.clone(),
    };
    let gain = rate_function(&with_atom, &fp, &standard(), grid).unwrap()
        - rate_function(&eq, &fp, &standard(), grid).unwrap();
    assert!((gain + alpha * delta).abs() < 1e-14);
}

#[test]
fn energy_and_entropy_terms() {
    let mf = gaussian_model();
    let grid = &mf.grid;
    let zero = MomentumMeasure::zero(grid.len());
    assert_eq!(mf.energy_density(&zero).unwrap(), 0.0);
    assert_eq!(mf.grand_potential(&zero, &ens(8, 0.3)).unwrap(), 0.0);
    assert_eq!(entropy_term(&zero, &standard(), grid).unwrap(), 0.0);

    let nu_c = 0.3;
    let pure = MomentumMeasure {
        condensate: nu_c,
        continuous: vec![0.0; grid.len()],
    };
    let u = mf.energy_density(&pure).unwrap();
    assert!((u - (0.5 * nu_c * nu_c + 0.5 * nu_c * nu_c * 1.0)).abs() < 1e-15);

    let sol = mf.solve(&standard(), &opts()).unwrap();
    let s = entropy_term(&sol.measure, &standard(), grid).unwrap();
    let mut no_atom = sol.measure.clone();
    no_atom.condensate = 0.0;
    assert_eq!(entropy_term(&no_atom, &standard(), grid).unwrap(), s);
    let closed = -grid.integrate_fn_indexed(|i, _| pi_star0(sol.measure.continuous[i], 1.0).unwrap());
    assert!((s - closed).abs() <= 1e-12 * s.abs());

    let plain = bare(0.5, 1.0);
    let m = MomentumMeasure {
        condensate: 0.1,
        continuous: plain.grid.nodes.iter().map(|k| (-k * k).exp()).collect(),
    };
    let total = m.total_mass(&plain.grid).unwrap();
    let kinetic = plain.grid.integrate_fn_indexed(|i, k| k * k * m.continuous[i]);
    assert!((plain.energy_density(&m).unwrap() - (kinetic + 0.5 * total * total)).abs() < 1e-15);
}

#[test]
fn functional_decreases_and_pressure_increases_in_lambda() {
    let mf = gaussian_model();
    let sol = mf.solve(&standard(), &opts()).unwrap();
    let lambdas = [0.0, 0.02, 0.05, 0.1, 0.2];
    let e: Vec<f64> = lambdas
        .iter()
        .map(|&l| mf.grand_potential(&sol.measure, &ens(8, l)).unwrap())
        .collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]));
    let p: Vec<f64> = lambdas
        .iter()
        .map(|&l| mf.pressure(&ens(8, l), &opts()).unwrap())
        .collect();
    assert!(p.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn pressure_increases_in_mu_with_slope_equal_to_density() {
    let mf = gaussian_model();
    let h = 1e-5;
    let mut last = f64::NEG_INFINITY;
    for mu in [-1.0, -0.5, 0.0, 0.05, 0.2, 0.35, 0.5] {
        let sol = mf.solve_at(mu, &standard(), &opts()).unwrap();
        assert!(sol.pressure > last);
        last = sol.pressure;
        let slope = (mf.solve_at(mu + h, &standard(), &opts()).unwrap().pressure
            - mf.solve_at(mu - h, &standard(), &opts()).unwrap().pressure)
            / (2.0 * h);
        let rho = sol.measure.total_mass(&mf.grid).unwrap();
        assert!((slope - rho).abs() < 1e-6 * rho, "mu={mu}: {slope} vs {rho}");
    }
}

#[test]
fn minimizer_is_continuous_as_lambda_vanishes() {
    let mf = gaussian_model();
    let d = mf.lambda_continuity(16, &[1e-1, 1e-2, 1e-3, 1e-4], &opts()).unwrap();
    for w in d.windows(2) {
        assert!(w[1].1 < 0.2 * w[0].1, "{d:?}");
    }
    assert!(d[3].1 < 1e-3);
}

#[test]
fn lambda_derivative_matches_finite_differences() {
    let gauss = gaussian_model();
    let expo = MeanField::with_default_grid(ModelParams::new(1.0, -0.5, 1.0, exponential())).unwrap();
    let normal_gauss = MeanField::with_default_grid(ModelParams::new(1.0, -0.5, 1.0, gaussian())).unwrap();
    for mf in [gauss, &normal_gauss, &expo] {
        let rows = mf.theorem_a(&[4, 32, 256], 1e-5, &opts()).unwrap();
        for r in rows {
            assert!(
                r.relative_gap <= 1e-4,
                "mu={} Q={}: {}",
                mf.params.mu,
                r.q,
                r.relative_gap
            );
        }
    }
}

#[test]
fn finite_difference_error_is_second_order() {
    let mf = gaussian_model();
    let sol = mf.solve(&standard(), &opts()).unwrap();
    let exact = rho_short_analytic(&sol, 8, &mf.grid).unwrap();
    let (fd1, _, _) = mf.rho_short_finite_difference(8, 2e-2, &opts()).unwrap();
    let (fd2, _, _) = mf.rho_short_finite_difference(8, 1e-2, &opts()).unwrap();
    let ratio = (fd1 - exact).abs() / (fd2 - exact).abs();
    assert!((ratio - 4.0).abs() < 0.5, "{ratio}");
}

#[test]
fn bare_short_density_is_the_shifted_free_one() {
    for mu in [-0.2, 0.5] {
        let mf = bare(mu, 1.0);
        let sol = mf.solve(&standard(), &opts()).unwrap();
        let alpha = (mu - sol.measure.excited_mass(&mf.grid).unwrap() - sol.nu_c()).min(0.0);
        let fp = free_params(alpha);
        for q in [1, 10, 100] {
            let a = rho_short_analytic(&sol, q, &mf.grid).unwrap();
            let b = free_rho_short(&fp, q, &mf.grid).unwrap();
            assert!((a - b).abs() < 1e-10 * b, "mu={mu} Q={q}");
        }
    }
}

#[test]
fn q_sweep_recovers_condensate_and_vanishes_in_normal_phase() {
    let mf = gaussian_model();
    let qs: Vec<usize> = (0..=12).map(|i| 1 << i).collect();
    let report = mf.q_sweep(&qs, &opts()).unwrap();
    assert_eq!(report.regime, Regime::Condensed);
    assert!(report.headline_gap() <= 1e-3);
    assert!((report.rho_total - report.nu_c - report.nu_e).abs() < 1e-15);
    assert!(report.rho_short_by_q.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(report.rho_short_by_q.iter().all(|&(_, r)| r <= report.nu_e + 1e-12));
    assert!(report.rho_long >= -1e-12);

    let normal = mf.solve_at(-0.5, &standard(), &opts()).unwrap();
    let report = mf.sweep_solution(&normal, &qs).unwrap();
    assert!(report.rho_long.abs() <= 1e-8);

    let zero = cyclegas::EquilibriumSolution {
        measure: MomentumMeasure::zero(mf.len()),
        ..normal
    };
    assert_eq!(rho_short_analytic(&zero, 16, &mf.grid).unwrap(), 0.0);
}

#[test]
fn rejects_nonpositive_mean_field() {
    let p = ModelParams::new(1.0, 0.5, 0.0, gaussian());
    assert!(MeanField::with_default_grid(p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solutions_satisfy_their_invariants(mu in -1.5f64..0.5, q in 1usize..64, lambda in 0.0f64..0.05) {
        let mf = gaussian_model();
        let e = ens(q, lambda);
        let sol = mf.solve_at(mu, &e, &opts()).unwrap();
        prop_assert!(sol.residual <= opts().tolerance);
        prop_assert!(sol.effective_field.iter().all(|&g| g > 0.0));
        let (el, g0) = mf.euler_lagrange_residual(&sol).unwrap();
        prop_assert!(el <= 1e-9);
        match sol.regime {
            Regime::Normal => prop_assert!(sol.nu_c() == 0.0 && sol.field_at_origin > 0.0),
            Regime::Condensed => prop_assert!(sol.nu_c() > 0.0 && g0 <= 1e-9),
        }
    }
}
