//! Scalar functions of the modified cycle ensemble.
//!
//! The ensemble gives cycles of length `q <= Q` an extra weight `e^{βλq}`.
//! Its one-mode pressure is
//!
//! ```text
//! π(y) = Σ_{q≤Q} e^{β(y+λ)q}/(βq) + Σ_{q>Q} e^{βyq}/(βq),   y < 0
//! ```
//!
//! and everything here is built from split geometric sums of that series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cycle cutoff `Q`, cycle weight `λ` and inverse temperature `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedEnsembleParams {
    pub q_cutoff: usize,
    pub lambda: f64,
    pub beta: f64,
}

/// Smallest admitted λ. Negative values are only used for central differences at λ = 0.
pub const LAMBDA_MIN: f64 = -1.0;

impl ModifiedEnsembleParams {
    pub fn new(q_cutoff: usize, lambda: f64, beta: f64) -> Result<Self> {
        let p = ModifiedEnsembleParams { q_cutoff, lambda, beta };
        p.validate()?;
        Ok(p)
    }

    /// The unmodified ensemble (λ = 0). The cutoff is irrelevant there.
    pub fn standard(beta: f64) -> Result<Self> {
        Self::new(1, 0.0, beta)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.q_cutoff, lambda, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_cutoff < 1 {
            return Err(Error::invalid("q_cutoff must be at least 1"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= LAMBDA_MIN) {
            return Err(Error::invalid(format!(
                "lambda must be finite and >= {LAMBDA_MIN}, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

fn check_y(y: f64) -> Result<()> {
    if y.is_nan() || y >= 0.0 {
        return Err(Error::domain(format!("kernel argument y must be negative, got {y}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if t.is_nan() || t <= 0.0 || t.is_infinite() {
        return Err(Error::domain(format!(
            "occupation t must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// `Σ_{q=1}^{n} e^{sq}`.
pub fn geometric_sum(s: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if s == 0.0 {
        return n as f64;
    }
    let nf = n as f64;
    if s > 0.0 && s * nf > 700.0 {
        // e^{s(n+1)} / (e^s - 1) up to a negligible correction, done in logs.
        return ((s * (nf + 1.0)) - (s.exp_m1()).ln()).exp() * (-(-(s * nf)).exp_m1());
    }
    s.exp() * (s * nf).exp_m1() / s.exp_m1()
}

/// `Σ_{q=1}^{n} q e^{sq}`.
pub fn geometric_moment(s: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    if s == 0.0 {
        return nf * (nf + 1.0) / 2.0;
    }
    if n <= 64 || (s * nf).abs() < 2.0 {
        let mut acc = 0.0;
        for q in 1..=n {
            let qf = q as f64;
            acc += qf * (s * qf).exp();
        }
        return acc;
    }
    let e = s.exp_m1();
    let eq = (s * nf).exp_m1();
    (s.exp() / e) * (nf * (s * nf).exp() - eq / e)
}

/// `Σ_{q>n} e^{sq}` for `s < 0`.
fn tail_sum(s: f64, n: usize) -> f64 {
    (s * (n as f64 + 1.0)).exp() / (-s.exp_m1())
}

/// `Σ_{q>n} q e^{sq}` for `s < 0`.
fn tail_moment(s: f64, n: usize) -> f64 {
    let w = s.exp();
    let one_minus_w = -s.exp_m1();
    let n1 = n as f64 + 1.0;
    (s * n1).exp() * (n1 / one_minus_w + w / (one_minus_w * one_minus_w))
}

/// `-ln(1 - e^{x})` for `x < 0`.
fn neg_log1m_exp(x: f64) -> f64 {
    if x < -0.7 {
        -(-x.exp()).ln_1p()
    } else {
        -(-x.exp_m1()).ln()
    }
}

/// The modified one-mode pressure `π_{Q,λ}(y)`.
pub fn pi(y: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    check_y(y)?;
    let by = p.beta * y;
    let bl = p.beta * p.lambda;
    let base = neg_log1m_exp(by);
    let mut extra = 0.0;
    if bl != 0.0 {
        for q in 1..=p.q_cutoff {
            let qf = q as f64;
            let x = bl * qf;
            // w^q (e^{βλq} - 1), arranged so neither factor overflows alone.
            let term = if x > 30.0 {
                ((by + bl) * qf).exp() * (-(-x).exp_m1())
            } else {
                (by * qf).exp() * x.exp_m1()
            } / qf;
            extra += term;
            // The remaining terms are bounded by a geometric series in max(z, w).
            let s = (by + bl).max(by);
            if s < 0.0 && q % 16 == 0 {
                let rest = tail_sum(s, q) / (qf + 1.0);
                if rest < 1e-17 * (base + extra).abs() {
                    break;
                }
            }
        }
    }
    let v = (base + extra) / p.beta;
    if !v.is_finite() {
        return Err(Error::Overflow("pi"));
    }
    Ok(v)
}

/// `∂π/∂y`, the mean occupation at `y`.
pub fn pi_prime(y: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    check_y(y)?;
    let by = p.beta * y;
    let bz = p.beta * (y + p.lambda);
    let v = geometric_sum(bz, p.q_cutoff) + tail_sum(by, p.q_cutoff);
    if !v.is_finite() {
        return Err(Error::Overflow("pi_prime"));
    }
    Ok(v)
}

/// `∂²π/∂y²`.
pub fn pi_double_prime(y: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    check_y(y)?;
    let by = p.beta * y;
    let bz = p.beta * (y + p.lambda);
    let v = p.beta * (geometric_moment(bz, p.q_cutoff) + tail_moment(by, p.q_cutoff));
    if !v.is_finite() {
        return Err(Error::Overflow("pi_double_prime"));
    }
    Ok(v)
}

/// `∂π/∂λ = Σ_{q≤Q} e^{β(y+λ)q}`.
pub fn dpi_dlambda(y: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    check_y(y)?;
    let v = geometric_sum(p.beta * (y + p.lambda), p.q_cutoff);
    if !v.is_finite() {
        return Err(Error::Overflow("dpi_dlambda"));
    }
    Ok(v)
}

/// Bracket and iteration record of a failed inversion, kept for diagnostics.
#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: f64,
    hi: f64,
}

/// The unique `y < 0` with `π'(y) = t`.
pub fn y_of_t(t: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    check_t(t)?;
    p.validate()?;
    let lt = t.ln();
    let f = |y: f64| -> Result<f64> { Ok(pi_prime(y, p)?.ln() - lt) };

    let guess = y0_of_t(t, p.beta)?;
    let spread = p.lambda.abs().max(1e-3 * guess.abs()).max(f64::MIN_POSITIVE);

    // Upper end: move toward 0 until π' exceeds t.
    let mut hi = (guess + spread).min(0.5 * guess);
    let mut k = 0;
    while f(hi)? <= 0.0 {
        hi *= 0.5;
        k += 1;
        if k > 2000 || hi == 0.0 {
            return Err(Error::NoConvergence {
                what: "y_of_t bracket",
                iterations: k,
                residual: f64::NAN,
                detail: format!("no upper bracket for t={t}"),
            });
        }
    }
    // Lower end: move away from 0 until π' falls below t.
    let mut lo = (guess - spread).min(hi);
    let mut step = spread.max(1.0 / p.beta);
    k = 0;
    while f(lo)? > 0.0 {
        lo -= step;
        step *= 2.0;
        k += 1;
        if k > 2000 || !lo.is_finite() {
            return Err(Error::NoConvergence {
                what: "y_of_t bracket",
                iterations: k,
                residual: f64::NAN,
                detail: format!("no lower bracket for t={t}"),
            });
        }
    }
    let mut br = Bracket { lo, hi };

    // Bisection until the bracket is narrow relative to |y|.
    let mut iterations = 0;
    while br.hi - br.lo > 1e-3 * br.hi.abs() && iterations < 400 {
        let mid = 0.5 * (br.lo + br.hi);
        if f(mid)? > 0.0 {
            br.hi = mid;
        } else {
            br.lo = mid;
        }
        iterations += 1;
    }

    // Newton on ln π', kept inside the bracket.
    let mut y = 0.5 * (br.lo + br.hi);
    let mut res = f64::INFINITY;
    for _ in 0..100 {
        iterations += 1;
        let pp = pi_prime(y, p)?;
        res = pp.ln() - lt;
        if res.abs() <= 1e-13 {
            return Ok(y);
        }
        if res > 0.0 {
            br.hi = y;
        } else {
            br.lo = y;
        }
        let slope = pi_double_prime(y, p)? / pp;
        let mut next = y - res / slope;
        if !(next > br.lo && next < br.hi) {
            next = 0.5 * (br.lo + br.hi);
        }
        if next == y {
            break;
        }
        y = next;
    }
    if (pi_prime(y, p)? / t - 1.0).abs() <= 1e-12 {
        return Ok(y);
    }
    Err(Error::NoConvergence {
        what: "y_of_t",
        iterations,
        residual: res,
        detail: format!("t={t}, bracket=[{:e}, {:e}]", br.lo, br.hi),
    })
}

/// Legendre transform `π*(t) = t y(t) − π(y(t))`.
pub fn pi_star(t: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    let y = y_of_t(t, p)?;
    Ok(t * y - pi(y, p)?)
}

/// `π*` extended continuously to `t = 0`, where it vanishes.
pub fn pi_star_or_zero(t: f64, p: &ModifiedEnsembleParams) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    pi_star(t, p)
}

/// `π_0(y) = −β⁻¹ ln(1 − e^{βy})`.
pub fn pi0(y: f64, beta: f64) -> Result<f64> {
    check_y(y)?;
    Ok(neg_log1m_exp(beta * y) / beta)
}

/// `y_0(t) = β⁻¹ ln(t/(t+1))`.
pub fn y0_of_t(t: f64, beta: f64) -> Result<f64> {
    check_t(t)?;
    Ok(-(1.0 / t).ln_1p() / beta)
}

/// `π*_0(t) = β⁻¹[t ln t − (t+1) ln(t+1)]`, zero at `t = 0`.
pub fn pi_star0(t: f64, beta: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    check_t(t)?;
    Ok(-(t * (1.0 / t).ln_1p() + t.ln_1p()) / beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(q: usize, l: f64, b: f64) -> ModifiedEnsembleParams {
        ModifiedEnsembleParams::new(q, l, b).unwrap()
    }

    #[test]
    fn rejects_nonnegative_argument() {
        let p = ens(3, 0.1, 1.0);
        assert!(matches!(pi(0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(pi_prime(0.1, &p), Err(Error::Domain(_))));
        assert!(matches!(y_of_t(0.0, &p), Err(Error::Domain(_))));
        assert!(ModifiedEnsembleParams::new(0, 0.0, 1.0).is_err());
        assert!(ModifiedEnsembleParams::new(1, 0.0, 0.0).is_err());
    }

    #[test]
    fn pi_at_half_occupation() {
        let p = ens(7, 0.0, 1.0);
        let v = pi(-std::f64::consts::LN_2, &p).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((pi_prime(-std::f64::consts::LN_2, &p).unwrap() - 1.0).abs() < 1e-14);
        assert!((pi_double_prime(-std::f64::consts::LN_2, &p).unwrap() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn vanishing_far_from_zero() {
        let p = ens(5, 0.5, 1.0);
        assert!(pi(-800.0, &p).unwrap() < 1e-300);
        assert!(pi_prime(-800.0, &p).unwrap() < 1e-300);
    }

    #[test]
    fn geometric_helpers_match_loops() {
        for &s in &[-3.0, -0.01, -1e-7, 0.0, 1e-6, 0.002] {
            for &n in &[1usize, 5, 80, 1000] {
                let direct: f64 = (1..=n).map(|q| (s * q as f64).exp()).sum();
                let moment: f64 = (1..=n).map(|q| q as f64 * (s * q as f64).exp()).sum();
                assert!((geometric_sum(s, n) / direct - 1.0).abs() < 1e-12, "{s} {n}");
                assert!((geometric_moment(s, n) / moment - 1.0).abs() < 1e-11, "{s} {n}");
            }
        }
    }

    #[test]
    fn single_term_lambda_derivative() {
        let p = ens(1, 0.0, 1.0);
        assert!((dpi_dlambda(-1.0, &p).unwrap() - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn standard_y_of_one() {
        let p = ens(4, 0.0, 1.0);
        let y = y_of_t(1.0, &p).unwrap();
        assert!((y + std::f64::consts::LN_2).abs() < 1e-13);
        assert!((y0_of_t(1.0, 1.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn standard_pi_star_at_one() {
        let p = ens(4, 0.0, 1.0);
        let expect = -2.0 * std::f64::consts::LN_2;
        assert!((pi_star(1.0, &p).unwrap() - expect).abs() < 1e-12);
        assert!((pi_star0(1.0, 1.0).unwrap() - expect).abs() < 1e-15);
        assert_eq!(pi_star0(0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn round_trip_extremes() {
        for &(q, l) in &[(1usize, 0.0), (8, 0.4), (300, 0.02), (3, -0.3)] {
            let p = ens(q, l, 1.3);
            for &t in &[1e-6, 1.0, 1e6] {
                let y = y_of_t(t, &p).unwrap();
                assert!(y < 0.0);
                assert!((pi_prime(y, &p).unwrap() / t - 1.0).abs() <= 1e-12, "{q} {l} {t}");
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_general() {
        for &q in &[1usize, 10, 1000] {
            let p = ens(q, 0.0, 2.0);
            let a = pi(-0.3, &p).unwrap();
            let b = pi0(-0.3, 2.0).unwrap();
            assert!((a / b - 1.0).abs() < 1e-12);
            for &t in &[0.01, 0.5, 3.0, 250.0] {
                let ys = y_of_t(t, &p).unwrap();
                assert!((ys / y0_of_t(t, 2.0).unwrap() - 1.0).abs() < 1e-12);
                let s = pi_star(t, &p).unwrap();
                assert!((s / pi_star0(t, 2.0).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_positive_lambda_stays_finite() {
        let p = ens(4096, 0.1, 1.0);
        let y = -1e-8;
        assert!(pi(y, &p).unwrap().is_finite());
        assert!(pi_prime(y, &p).unwrap().is_finite());
        assert!(pi_double_prime(y, &p).unwrap().is_finite());
    }
}
