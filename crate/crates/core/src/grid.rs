//! Radial quadrature in `d` dimensions and angular-averaged coupling kernels.
//!
//! All measures are isotropic, so integrals over `dk/(2π)^d` reduce to a radial
//! integral with the surface factor `S_{d-1} k^{d-1} / (2π)^d` folded into the weights.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of Gauss–Legendre points used for angular averages.
pub const DEFAULT_ANGULAR_ORDER: usize = 64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Surface area `S_{d-1} = 2π^{d/2}/Γ(d/2)` of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    // Γ(d/2) by exact recursion from Γ(1) = 1 or Γ(1/2) = √π.
    let mut gamma = if d.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut s = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
    while s + 0.5 < d as f64 / 2.0 {
        gamma *= s;
        s += 1.0;
    }
    2.0 * PI.powf(d as f64 / 2.0) / gamma
}

/// Radial nodes and weights for `∫ f(|k|) dk/(2π)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub dimension: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub k_max: f64,
    pub edges: Vec<f64>,
    pub order: usize,
}

impl RadialGrid {
    /// Composite Gauss–Legendre on the given panel edges.
    pub fn from_panels(d: usize, edges: &[f64], order: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if order < 2 {
            return Err(Error::invalid("quadrature order must be at least 2"));
        }
        if edges.len() < 2 {
            return Err(Error::invalid("need at least one panel"));
        }
        if edges[0] < 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "panel edges must be nonnegative and strictly increasing",
            ));
        }
        let (gx, gw) = gauss_legendre(order);
        let factor = sphere_area(d) / (2.0 * PI).powi(d as i32);
        let mut nodes = Vec::with_capacity(order * (edges.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let half = 0.5 * (w[1] - w[0]);
            for (x, wt) in gx.iter().zip(&gw) {
                let k = mid + half * x;
                nodes.push(k);
                weights.push(wt * half * factor * k.powi(d as i32 - 1));
            }
        }
        Ok(RadialGrid {
            dimension: d,
            nodes,
            weights,
            k_max: *edges.last().unwrap(),
            edges: edges.to_vec(),
            order,
        })
    }

    /// Equal panels on `[0, k_max]`.
    pub fn uniform(d: usize, k_max: f64, panels: usize, order: usize) -> Result<Self> {
        if !(k_max.is_finite() && k_max > 0.0) {
            return Err(Error::invalid("k_max must be positive"));
        }
        if panels < 1 {
            return Err(Error::invalid("panels must be at least 1"));
        }
        let edges: Vec<f64> = (0..=panels).map(|i| k_max * i as f64 / panels as f64).collect();
        Self::from_panels(d, &edges, order)
    }

    /// Panels halving in width from `min(1, k_max/2)` down to `k_min`, then
    /// `panels` equal panels out to `k_max`.
    pub fn graded(d: usize, k_max: f64, panels: usize, order: usize, k_min: f64) -> Result<Self> {
        if !(k_max.is_finite() && k_max > 0.0) {
            return Err(Error::invalid("k_max must be positive"));
        }
        if panels < 1 {
            return Err(Error::invalid("panels must be at least 1"));
        }
        let split = 1.0f64.min(0.5 * k_max);
        if !(k_min > 0.0 && k_min < split) {
            return Err(Error::invalid(format!("k_min must lie in (0, {split})")));
        }
        let mut inner = vec![split];
        let mut k = split;
        while k > k_min {
            k *= 0.5;
            inner.push(k);
        }
        inner.push(0.0);
        inner.reverse();
        let mut edges = inner;
        for i in 1..=panels {
            edges.push(split + (k_max - split) * i as f64 / panels as f64);
        }
        Self::from_panels(d, &edges, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ_i weight_i values_i`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.nodes.len() {
            return Err(Error::ShapeMismatch {
                expected: self.nodes.len(),
                got: values.len(),
            });
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// Integral of `f(k)` against `dk/(2π)^d`.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&k, &w)| w * f(k)).sum()
    }

    /// Integral of `f(i, k_i)` against the grid weights.
    pub fn integrate_fn_indexed(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(i, (&k, &w))| w * f(i, k))
            .sum()
    }

    /// Relative error of `∫ e^{-s k²} dk/(2π)^d` against `(4πs)^{-d/2}`.
    pub fn gaussian_error(&self, s: f64) -> f64 {
        let exact = (4.0 * PI * s).powf(-(self.dimension as f64) / 2.0);
        let v = self.integrate_fn(|k| (-s * k * k).exp());
        (v / exact - 1.0).abs()
    }

    /// Gate on the Gaussian test integral at scale `s`.
    pub fn self_test(&self, s: f64) -> Result<f64> {
        let err = self.gaussian_error(s);
        if err > 1e-10 {
            return Err(Error::invalid(format!(
                "grid self-test failed: Gaussian integral off by {err:e} (relative)"
            )));
        }
        Ok(err)
    }
}

/// An isotropic momentum measure: an atom at the origin plus a density on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumMeasure {
    pub condensate: f64,
    pub continuous: Vec<f64>,
}

impl MomentumMeasure {
    pub fn zero(n: usize) -> Self {
        MomentumMeasure {
            condensate: 0.0,
            continuous: vec![0.0; n],
        }
    }

    pub fn validate(&self, grid: &RadialGrid) -> Result<()> {
        if self.continuous.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: self.continuous.len(),
            });
        }
        if !(self.condensate >= 0.0 && self.condensate.is_finite()) {
            return Err(Error::domain("condensate weight must be finite and nonnegative"));
        }
        if self.continuous.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::domain("continuous density must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Mass of the continuous part.
    pub fn excited_mass(&self, grid: &RadialGrid) -> Result<f64> {
        grid.integrate(&self.continuous)
    }

    pub fn total_mass(&self, grid: &RadialGrid) -> Result<f64> {
        Ok(self.condensate + self.excited_mass(grid)?)
    }
}

/// The mode-coupling kernel `v(k, k')`, a function of `|k − k'|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    #[default]
    None,
    Gaussian {
        v0: f64,
        c: f64,
    },
    Exponential {
        v0: f64,
        c: f64,
    },
    /// Piecewise-linear in distance through the given points, constant beyond the last one.
    Tabulated {
        distances: Vec<f64>,
        values: Vec<f64>,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::None => Ok(()),
            KernelSpec::Gaussian { v0, c } | KernelSpec::Exponential { v0, c } => {
                if !(v0.is_finite() && *v0 > 0.0 && c.is_finite() && *c > 0.0) {
                    return Err(Error::invalid("kernel v0 and c must be finite and positive"));
                }
                Ok(())
            }
            KernelSpec::Tabulated { distances, values } => {
                if distances.is_empty() || distances.len() != values.len() {
                    return Err(Error::invalid("tabulated kernel needs matching nonempty columns"));
                }
                if distances[0] != 0.0 {
                    return Err(Error::invalid("tabulated kernel must start at distance 0"));
                }
                if distances.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("tabulated distances must be strictly increasing"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("tabulated kernel values must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, KernelSpec::None)
    }

    /// `v` at distance `r ≥ 0`.
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            KernelSpec::None => 0.0,
            KernelSpec::Gaussian { v0, c } => v0 * (-c * r * r).exp(),
            KernelSpec::Exponential { v0, c } => v0 * (-c * r).exp(),
            KernelSpec::Tabulated { distances, values } => {
                let n = distances.len();
                if r >= distances[n - 1] {
                    return values[n - 1];
                }
                let j = distances.partition_point(|&d| d <= r);
                let (d0, d1) = (distances[j - 1], distances[j]);
                let s = (r - d0) / (d1 - d0);
                values[j - 1] + s * (values[j] - values[j - 1])
            }
        }
    }

    /// `v(r0 + delta) − v(r0)` without cancellation for the analytic kinds.
    pub fn diff(&self, r0: f64, delta: f64) -> f64 {
        match self {
            KernelSpec::None => 0.0,
            KernelSpec::Gaussian { v0, c } => v0 * (-c * r0 * r0).exp() * (-c * delta * (2.0 * r0 + delta)).exp_m1(),
            KernelSpec::Exponential { v0, c } => v0 * (-c * r0).exp() * (-c * delta).exp_m1(),
            KernelSpec::Tabulated { .. } => self.eval(r0 + delta) - self.eval(r0),
        }
    }

    /// `v(k, k')` for vector momenta.
    pub fn eval_vectors(&self, k: &[f64], kp: &[f64]) -> f64 {
        let r2: f64 = k.iter().zip(kp).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval(r2.sqrt())
    }
}

/// Angular-averaged kernel on a grid.
///
/// `w[i*n + j]` is the average of `v(k_i, k_j')` over relative angles, `w0[i] = v(k_i, 0)`,
/// `v00 = v(0, 0)`. The offsets `diff[i*n + j] = w[i*n + j] − w0[j]` and
/// `d0[i] = w0[i] − v00` are assembled directly so the condensed equations do not
/// lose digits near the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrices {
    pub n: usize,
    pub w: Vec<f64>,
    pub w0: Vec<f64>,
    pub v00: f64,
    pub diff: Vec<f64>,
    pub d0: Vec<f64>,
    pub trivial: bool,
}

/// Angular rule: sample points and their normalized weights.
enum AngularRule {
    /// `d = 1`: the two collinear configurations.
    Line,
    /// `d = 3`: integrate in the distance `r`, which is smooth for every kernel kind.
    Distance { x: Vec<f64>, w: Vec<f64> },
    /// Otherwise: integrate in the relative angle with weight `sin^{d-2} θ`.
    Angle { theta: Vec<f64>, w: Vec<f64> },
}

impl AngularRule {
    fn new(d: usize, order: usize) -> Self {
        match d {
            1 => AngularRule::Line,
            3 => {
                let (x, w) = gauss_legendre(order);
                AngularRule::Distance { x, w }
            }
            _ => {
                let (x, w) = gauss_legendre(order);
                let theta: Vec<f64> = x.iter().map(|xi| 0.5 * PI * (xi + 1.0)).collect();
                let mut wt: Vec<f64> = theta
                    .iter()
                    .zip(&w)
                    .map(|(t, wi)| wi * t.sin().powi(d as i32 - 2))
                    .collect();
                let s: f64 = wt.iter().sum();
                wt.iter_mut().for_each(|v| *v /= s);
                AngularRule::Angle { theta, w: wt }
            }
        }
    }

    /// Returns `(avg v(k, k'), avg v(k, k') − v(k'))`.
    fn average(&self, spec: &KernelSpec, k: f64, kp: f64) -> (f64, f64) {
        match self {
            AngularRule::Line => {
                let (r1, d1) = ((k - kp).abs(), if k < kp { -k } else { k - 2.0 * kp });
                let (r2, d2) = (k + kp, k);
                let avg = 0.5 * (spec.eval(r1) + spec.eval(r2));
                let dif = 0.5 * (spec.diff(kp, d1) + spec.diff(kp, d2));
                (avg, dif)
            }
            AngularRule::Distance { x, w } => {
                // avg = (1/(2kk')) ∫_{|k-k'|}^{k+k'} v(r) r dr
                let mid = k.max(kp);
                let half = k.min(kp);
                let scale = half / (2.0 * k * kp);
                let (mut avg, mut dif) = (0.0, 0.0);
                for (xi, wi) in x.iter().zip(w) {
                    let r = mid + half * xi;
                    let delta = if kp >= k { half * xi } else { (k - kp) + kp * xi };
                    avg += wi * spec.eval(r) * r;
                    dif += wi * spec.diff(kp, delta) * r;
                }
                (avg * scale, dif * scale)
            }
            AngularRule::Angle { theta, w } => {
                let (mut avg, mut dif) = (0.0, 0.0);
                for (t, wi) in theta.iter().zip(w) {
                    let s = (0.5 * t).sin();
                    let r = ((k - kp) * (k - kp) + 4.0 * k * kp * s * s).sqrt();
                    let delta = k * (k - 2.0 * kp * t.cos()) / (r + kp);
                    avg += wi * spec.eval(r);
                    dif += wi * spec.diff(kp, delta);
                }
                (avg, dif)
            }
        }
    }
}

/// Assemble the angular-averaged kernel on `grid` with the default angular order.
pub fn angular_average_kernel(spec: &KernelSpec, grid: &RadialGrid) -> Result<KernelMatrices> {
    angular_average_kernel_with_order(spec, grid, DEFAULT_ANGULAR_ORDER)
}

pub fn angular_average_kernel_with_order(spec: &KernelSpec, grid: &RadialGrid, order: usize) -> Result<KernelMatrices> {
    spec.validate()?;
    if order < 2 {
        return Err(Error::invalid("angular order must be at least 2"));
    }
    let n = grid.len();
    if spec.is_none() {
        return Ok(KernelMatrices {
            n,
            w: vec![0.0; n * n],
            w0: vec![0.0; n],
            v00: 0.0,
            diff: vec![0.0; n * n],
            d0: vec![0.0; n],
            trivial: true,
        });
    }
    let rule = AngularRule::new(grid.dimension, order);
    let k = &grid.nodes;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut wr = vec![0.0; n];
            let mut dr = vec![0.0; n];
            for j in 0..n {
                // Evaluate each unordered pair the same way so W is exactly symmetric.
                let (a, b) = if i <= j { (k[i], k[j]) } else { (k[j], k[i]) };
                let (avg, _) = rule.average(spec, a, b);
                let (_, dif) = rule.average(spec, k[i], k[j]);
                wr[j] = avg;
                dr[j] = dif;
            }
            (wr, dr)
        })
        .collect();
    let mut w = Vec::with_capacity(n * n);
    let mut diff = Vec::with_capacity(n * n);
    for (wr, dr) in rows {
        w.extend(wr);
        diff.extend(dr);
    }
    let w0: Vec<f64> = k.iter().map(|&ki| spec.eval(ki)).collect();
    let d0: Vec<f64> = k.iter().map(|&ki| spec.diff(0.0, ki)).collect();
    Ok(KernelMatrices {
        n,
        w,
        w0,
        v00: spec.eval(0.0),
        diff,
        d0,
        trivial: false,
    })
}

impl KernelMatrices {
    fn check(&self, grid: &RadialGrid, m: &MomentumMeasure) -> Result<()> {
        if grid.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                got: grid.len(),
            });
        }
        if m.continuous.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                got: m.continuous.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    /// `(vm)(k_i)` at every node and `(vm)(0)`.
    pub fn apply(&self, m: &MomentumMeasure, grid: &RadialGrid) -> Result<(Vec<f64>, f64)> {
        self.check(grid, m)?;
        let n = self.n;
        let wm: Vec<f64> = grid.weights.iter().zip(&m.continuous).map(|(w, v)| w * v).collect();
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let row = &self.w[i * n..(i + 1) * n];
                m.condensate * self.w0[i] + row.iter().zip(&wm).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let at0 = m.condensate * self.v00 + self.w0.iter().zip(&wm).map(|(a, b)| a * b).sum::<f64>();
        Ok((out, at0))
    }

    /// `⟨m, vm⟩`.
    pub fn pair_energy(&self, m: &MomentumMeasure, grid: &RadialGrid) -> Result<f64> {
        self.check(grid, m)?;
        let n = self.n;
        let wm: Vec<f64> = grid.weights.iter().zip(&m.continuous).map(|(w, v)| w * v).collect();
        let mut cont = 0.0;
        for i in 0..n {
            let row = &self.w[i * n..(i + 1) * n];
            cont += wm[i] * row.iter().zip(&wm).map(|(a, b)| a * b).sum::<f64>();
        }
        let cross: f64 = self.w0.iter().zip(&wm).map(|(a, b)| a * b).sum();
        Ok(m.condensate * m.condensate * self.v00 + 2.0 * m.condensate * cross + cont)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the weighted Gram matrix `wt_i W_ij wt_j`.
    pub fn min_gram_eigenvalue(&self, grid: &RadialGrid) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let g = DMatrix::from_fn(self.n, self.n, |i, j| {
            grid.weights[i] * 0.5 * (self.at(i, j) + self.at(j, i)) * grid.weights[j]
        });
        SymmetricEigen::new(g).eigenvalues.min()
    }
}
