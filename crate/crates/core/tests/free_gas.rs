use cyclegas::free_gas::{
    critical_density, default_grid, density_error_estimate, free_density, free_modified_pressure,
    free_modified_pressure_series, free_pressure, free_rho_short, free_rho_short_series, free_short_gap, FreeGasParams,
};
use cyclegas::{Error, ModifiedEnsembleParams, RadialGrid};
use proptest::prelude::*;

/// ζ(3/2)(4π)^{-3/2}, 40-digit value.
const CRITICAL_3D: f64 = 0.058_643_621_347_644_42;
/// ζ(2)(4π)^{-2} = 1/96.
const CRITICAL_4D: f64 = 1.0 / 96.0;
const GAUSSIAN_3D: f64 = 0.022_448_390_265_645_82;

fn fp(alpha: f64, beta: f64, d: usize) -> FreeGasParams {
    FreeGasParams::new(alpha, beta, d).unwrap()
}

fn grid(d: usize, beta: f64) -> RadialGrid {
    default_grid(d, beta).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `Σ_{q>Q} e^{βαq}(4πβq)^{-d/2}` summed until the terms drop below round-off.
fn gap_series(alpha: f64, beta: f64, d: usize, q_cutoff: usize) -> f64 {
    let mut acc = 0.0;
    let mut q = q_cutoff + 1;
    loop {
        let t =
            (beta * alpha * q as f64).exp() * (4.0 * std::f64::consts::PI * beta * q as f64).powf(-(d as f64) / 2.0);
        acc += t;
        if t < 1e-20 * acc {
            return acc;
        }
        q += 1;
    }
}

#[test]
fn critical_density_in_three_dimensions() {
    let (v, err) = critical_density(1.0, 3).unwrap();
    assert!(rel(v, CRITICAL_3D) < 1e-10, "{v}");
    assert!(err < 1e-6 * v);
    let direct = free_density(&fp(0.0, 1.0, 3), &grid(3, 1.0)).unwrap();
    assert!((direct - CRITICAL_3D).abs() < 1e-6);
}

#[test]
fn critical_density_in_four_dimensions() {
    let (v, _) = critical_density(1.0, 4).unwrap();
    assert!(rel(v, CRITICAL_4D) < 1e-10, "{v}");
}

#[test]
fn critical_density_scales_with_temperature() {
    let (a, _) = critical_density(1.0, 3).unwrap();
    let (b, _) = critical_density(4.0, 3).unwrap();
    assert!((b / a - 0.125).abs() < 1e-10);
}

#[test]
fn no_critical_density_in_low_dimension() {
    for d in [1, 2] {
        assert!(matches!(critical_density(1.0, d), Err(Error::Divergence(_))));
        assert!(matches!(
            free_density(&fp(0.0, 1.0, d), &grid(d, 1.0)),
            Err(Error::Divergence(_))
        ));
    }
}

#[test]
fn two_dimensional_density_grows_without_bound() {
    // ν(α) = −ln(1 − e^{βα})/(4πβ) in d = 2.
    let mut last = 0.0;
    for alpha in [-1e-1, -1e-2, -1e-3, -1e-4] {
        let g = RadialGrid::graded(2, (40.0f64).sqrt(), 16, 16, 1e-6).unwrap();
        let v = free_density(&fp(alpha, 1.0, 2), &g).unwrap();
        let exact = -(-(alpha.exp_m1())).ln() / (4.0 * std::f64::consts::PI);
        assert!(rel(v, exact) < 1e-8, "alpha={alpha}: {v} vs {exact}");
        assert!(v > last + 0.15);
        last = v;
    }
}

#[test]
fn single_cycle_density_is_one_gaussian() {
    let v = free_rho_short(&fp(0.0, 1.0, 3), 1, &grid(3, 1.0)).unwrap();
    assert!(rel(v, GAUSSIAN_3D) < 1e-12);
    assert!(rel(free_rho_short_series(&fp(0.0, 1.0, 3), 1).unwrap(), GAUSSIAN_3D) < 1e-15);
}

#[test]
fn short_density_quadrature_equals_series() {
    let p = fp(-0.2, 1.0, 3);
    let g = grid(3, 1.0);
    let quad = free_rho_short(&p, 64, &g).unwrap();
    let series = free_rho_short_series(&p, 64).unwrap();
    assert!(rel(quad, series) < 1e-8);
    // 40-digit partial sum
    assert!(rel(series, 0.029_519_456_332_125_148) < 1e-14);
}

#[test]
fn densities_at_negative_alpha() {
    let p = fp(-0.2, 1.0, 3);
    let v = free_density(&p, &grid(3, 1.0)).unwrap();
    // Li_{3/2}(e^{-0.2}) (4π)^{-3/2}
    assert!(rel(v, 0.029_519_456_819_164_23) < 1e-10, "{v}");
    assert!(density_error_estimate(&p, &grid(3, 1.0)).unwrap() < 1e-10);
}

#[test]
fn pressure_matches_cycle_series_and_polylog() {
    let p = fp(-0.5, 1.0, 3);
    let g = grid(3, 1.0);
    let ens = ModifiedEnsembleParams::standard(1.0).unwrap();
    let quad = free_modified_pressure(&p, &ens, &g).unwrap();
    let series = free_modified_pressure_series(&p, &ens).unwrap();
    assert!(rel(quad, series) < 1e-9);
    // Li_{5/2}(e^{-0.5}) (4π)^{-3/2}
    assert!(rel(series, 0.015_546_868_516_099_196) < 1e-12);
    assert!(rel(free_pressure(&p, &g).unwrap(), series) < 1e-9);
    // ζ(5/2)(4π)^{-3/2} at the critical point
    assert!(rel(free_pressure(&fp(0.0, 1.0, 3), &g).unwrap(), 0.030_114_229_487_159_4) < 1e-8);
}

#[test]
fn modified_pressure_is_continuous_and_increasing_in_lambda() {
    let p = fp(-0.3, 1.0, 3);
    let g = grid(3, 1.0);
    let at = |l: f64| free_modified_pressure(&p, &ModifiedEnsembleParams::new(16, l, 1.0).unwrap(), &g).unwrap();
    assert!((at(1e-8) - at(0.0)).abs() <= 1e-7);
    let vals: Vec<f64> = (0..20).map(|i| at(0.01 * i as f64)).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn lambda_derivative_equals_short_density() {
    let g = grid(3, 1.0);
    for (alpha, q) in [(-0.2, 4), (-0.2, 64), (-1.0, 16), (-0.05, 256)] {
        let p = fp(alpha, 1.0, 3);
        let h = 1e-5;
        let ens = |l: f64| ModifiedEnsembleParams::new(q, l, 1.0).unwrap();
        let fd = (free_modified_pressure(&p, &ens(h), &g).unwrap() - free_modified_pressure(&p, &ens(-h), &g).unwrap())
            / (2.0 * h);
        let direct = free_rho_short(&p, q, &g).unwrap();
        assert!(rel(fd, direct) < 1e-8, "alpha={alpha} Q={q}");
    }
}

#[test]
fn short_gap_decays_geometrically() {
    let (alpha, beta) = (-0.2, 1.0);
    let p = fp(alpha, beta, 3);
    let g = grid(3, beta);
    let nu = free_density(&p, &g).unwrap();
    let rate = (beta * alpha).exp();
    let mut last = f64::INFINITY;
    for q in [8usize, 16, 32, 64, 128, 256, 512] {
        let gap = free_short_gap(&p, q, &g).unwrap();
        assert!(rel(gap, gap_series(alpha, beta, 3, q)) < 1e-8, "Q={q}");
        assert!(((nu - free_rho_short(&p, q, &g).unwrap()) - gap).abs() < 1e-12);
        let next = free_short_gap(&p, q + 1, &g).unwrap();
        let local = next / gap;
        assert!(local < rate && rate - local <= 2.0 * rate / q as f64, "Q={q}: {local}");
        assert!(gap < last);
        last = gap;
    }
}

#[test]
fn short_density_increases_to_total() {
    let p = fp(-0.1, 1.0, 3);
    let g = grid(3, 1.0);
    let nu = free_density(&p, &g).unwrap();
    let mut prev = 0.0;
    for q in 1..200 {
        let r = free_rho_short(&p, q, &g).unwrap();
        assert!(r > prev && r < nu);
        prev = r;
    }
}

#[test]
fn density_vanishes_far_below_zero() {
    let v = free_density(&fp(-60.0, 1.0, 3), &grid(3, 1.0)).unwrap();
    assert!(v < 1e-27);
}

#[test]
fn positive_alpha_rejected() {
    assert!(FreeGasParams::new(0.1, 1.0, 3).is_err());
    assert!(FreeGasParams::new(-0.1, 0.0, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn density_is_monotone_in_alpha(a in -5.0f64..-1e-3, b in -5.0f64..-1e-3) {
        prop_assume!((a - b).abs() > 1e-6);
        let g = grid(3, 1.0);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(free_density(&fp(lo, 1.0, 3), &g).unwrap() < free_density(&fp(hi, 1.0, 3), &g).unwrap());
    }
}
