//! Symmetric Lévy measures with radial densities and the truncated nonlocal
//! operator `I_R[x, Φ]`.
//!
//! The operator is split at a radius δ: inside, the compensated integrand is
//! replaced by its second-order form `½⟨D²Φ(x), M_δ⟩`; outside, pairs `±z` are
//! integrated together so the first-order compensator cancels exactly.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Mat2, Point, QuadraticTest, TestFunction};
use crate::quadrature::{adaptive_gl5, gl5};

/// Radial density of ν, before truncation.
#[derive(Clone)]
pub enum RadialDensity {
    /// `scale` on the whole truncation ball.
    Uniform { scale: f64 },
    /// `scale · |z|^{-N-alpha}`.
    Power { alpha: f64, scale: f64 },
    /// Arbitrary density of `|z|` (no closed-form moments).
    Custom { label: String, f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for RadialDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialDensity::Uniform { scale } => write!(f, "Uniform({scale})"),
            RadialDensity::Power { alpha, scale } => write!(f, "Power(alpha={alpha}, scale={scale})"),
            RadialDensity::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LevyMeasure {
    pub dim: usize,
    pub density: RadialDensity,
    pub trunc_r: f64,
}

impl LevyMeasure {
    pub fn uniform(dim: usize, trunc_r: f64) -> Self {
        LevyMeasure {
            dim,
            density: RadialDensity::Uniform { scale: 1.0 },
            trunc_r,
        }
    }

    pub fn power(dim: usize, alpha: f64, trunc_r: f64) -> Self {
        LevyMeasure {
            dim,
            density: RadialDensity::Power { alpha, scale: 1.0 },
            trunc_r,
        }
    }

    /// Density of ν at radius `r` (zero beyond the truncation radius).
    #[inline]
    pub fn density_at(&self, r: f64) -> f64 {
        if r > self.trunc_r || r <= 0.0 {
            return 0.0;
        }
        match &self.density {
            RadialDensity::Uniform { scale } => *scale,
            RadialDensity::Power { alpha, scale } => scale * r.powf(-(self.dim as f64) - alpha),
            RadialDensity::Custom { f, .. } => f(r),
        }
    }

    // Surface measure of the unit sphere: 2 in 1D (two points), 2π in 2D.
    fn sphere(&self) -> f64 {
        if self.dim == 1 {
            2.0
        } else {
            2.0 * PI
        }
    }

    /// `∫_{r0 ≤ |z| ≤ r1} |z|^k ν(dz)` by adaptive quadrature on dyadic shells.
    fn radial_moment_numeric(&self, k: i32, r0: f64, r1: f64) -> f64 {
        let n = self.dim as i32;
        let mut total = 0.0;
        let mut hi = r1.min(self.trunc_r);
        while hi > r0 {
            let lo = (0.5 * hi).max(r0);
            let (v, _) = adaptive_gl5(lo, hi, 1e-14, 20, &mut |r: f64| r.powi(k + n - 1) * self.density_at(r));
            total += v;
            hi = lo;
        }
        total * self.sphere()
    }

    /// ν-mass of `{δ ≤ |z| ≤ R}`.
    pub fn mass_outside(&self, delta: f64) -> f64 {
        let r = self.trunc_r;
        if delta >= r {
            return 0.0;
        }
        let n = self.dim as f64;
        match &self.density {
            RadialDensity::Uniform { scale } => scale * self.sphere() * (r.powf(n) - delta.powf(n)) / n,
            RadialDensity::Power { alpha, scale } => {
                if delta <= 0.0 {
                    return f64::INFINITY;
                }
                scale * self.sphere() * (delta.powf(-alpha) - r.powf(-alpha)) / alpha
            }
            RadialDensity::Custom { .. } => self.radial_moment_numeric(0, delta, r),
        }
    }
}

/// Outcome of [`validate_measure`].
#[derive(Clone, Debug, Serialize)]
pub struct MeasureReport {
    pub second_moment_inner: f64,
    pub tail_mass: f64,
    pub shell_ratio: f64,
    pub truncated: bool,
}

/// Checks `∫_B |z|²ν < ∞`, `∫_{ℝ^N∖B} ν < ∞` and the truncation.
///
/// Convergence near 0 is decided from dyadic shells: for `|z|^{-N-α}` the
/// shell contributions decay geometrically with ratio `2^{α-2}`, and a ratio
/// that tends to one means the second moment diverges.
pub fn validate_measure(m: &LevyMeasure) -> Result<MeasureReport> {
    if !(m.dim == 1 || m.dim == 2) {
        return Err(Error::Input(format!("measure dimension {} not supported", m.dim)));
    }
    if !(m.trunc_r > 0.0 && m.trunc_r.is_finite()) {
        return Err(Error::Input(format!("truncation radius must be positive, got {}", m.trunc_r)));
    }
    for k in 0..200 {
        let r = m.trunc_r * (k as f64 + 0.5) / 200.0;
        let d = m.density_at(r);
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::Input(format!("density is negative or not finite at |z|={r}: {d}")));
        }
    }
    let top = m.trunc_r.min(1.0);
    let shells: Vec<f64> = (0..60)
        .map(|k| {
            let hi = top * 0.5f64.powi(k);
            m.radial_moment_numeric(2, 0.5 * hi, hi)
        })
        .collect();
    let tail: Vec<f64> = shells[40..].to_vec();
    let ratio = if tail.iter().all(|&s| s == 0.0) {
        0.0
    } else {
        (tail[tail.len() - 1] / tail[tail.len() - 2]).max(tail[1] / tail[0])
    };
    if !ratio.is_finite() || ratio >= 1.0 - 1e-3 {
        return Err(Error::Input(format!(
            "second moment diverges near 0: dyadic shell contributions stop decaying (ratio {ratio:.6})"
        )));
    }
    let resid = shells[59] * ratio / (1.0 - ratio);
    let second = shells.iter().sum::<f64>() + resid;
    let tail_mass = if m.trunc_r > 1.0 {
        m.radial_moment_numeric(0, 1.0, m.trunc_r)
    } else {
        0.0
    };
    if !tail_mass.is_finite() {
        return Err(Error::Input("mass away from the origin is infinite".into()));
    }
    Ok(MeasureReport {
        second_moment_inner: second,
        tail_mass,
        shell_ratio: ratio,
        truncated: true,
    })
}

/// `M_δ = ∫_{|z|<δ} z⊗z ν(dz)` (isotropic, so a multiple of the identity).
pub fn inner_second_moment(m: &LevyMeasure, delta: f64) -> Mat2 {
    let d = delta.min(m.trunc_r).max(0.0);
    let mu = if d == 0.0 {
        0.0
    } else {
        match (&m.density, m.dim) {
            (RadialDensity::Uniform { scale }, 1) => 2.0 * scale * d.powi(3) / 3.0,
            (RadialDensity::Uniform { scale }, _) => PI * scale * d.powi(4) / 4.0,
            (RadialDensity::Power { alpha, scale }, 1) if *alpha < 2.0 => 2.0 * scale * d.powf(2.0 - alpha) / (2.0 - alpha),
            (RadialDensity::Power { alpha, scale }, _) if *alpha < 2.0 => PI * scale * d.powf(2.0 - alpha) / (2.0 - alpha),
            (RadialDensity::Power { .. }, _) => f64::INFINITY,
            (RadialDensity::Custom { .. }, _) => {
                let mut s = 0.0;
                let mut hi = d;
                for _ in 0..60 {
                    s += m.radial_moment_numeric(2, 0.5 * hi, hi);
                    hi *= 0.5;
                }
                s / m.dim as f64
            }
        }
    };
    if m.dim == 1 {
        [[mu, 0.0], [0.0, 0.0]]
    } else {
        [[mu, 0.0], [0.0, mu]]
    }
}

/// Resolution controls for the outer radial/angular integral.
#[derive(Clone, Copy, Debug)]
pub struct NonlocalQuadrature {
    /// Split radius δ.
    pub inner_split: f64,
    /// Width of the base radial panels, aligned to start at δ.
    pub panel: f64,
    /// Angular panels over `[0, π)` in 2D (five nodes each).
    pub angular_panels: usize,
    /// Absolute tolerance for the radial adaptivity.
    pub tol: f64,
    pub max_depth: u32,
}

impl NonlocalQuadrature {
    /// Matched to smooth reconstructions of fields on spacing `h`: split at
    /// h/4 (inside the flat core around a node) and panels of width h/2, so
    /// panel ends coincide with the blending breakpoints when `x` is a node.
    pub fn for_grid(h: f64) -> Self {
        NonlocalQuadrature {
            inner_split: 0.25 * h,
            panel: 0.5 * h,
            angular_panels: 16,
            tol: 1e-10,
            max_depth: 8,
        }
    }
}

/// Value and error estimate of a quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `½⟨Γ, M_R⟩`: the operator applied to a quadratic with Hessian Γ.
pub fn nonlocal_of_quadratic(m: &LevyMeasure, gamma: Mat2) -> f64 {
    let mr = inner_second_moment(m, m.trunc_r);
    0.5 * (gamma[0][0] * mr[0][0] + gamma[1][1] * mr[1][1])
}

/// `I_R[x, f]` for a general C² function.
pub fn nonlocal_smooth(m: &LevyMeasure, f: &dyn TestFunction, x: Point, q: &NonlocalQuadrature) -> Result<Estimate> {
    let delta = q.inner_split.min(m.trunc_r);
    let md = inner_second_moment(m, delta);
    let hx = f.hess(x);
    let inner = 0.5 * (hx[0][0] * md[0][0] + hx[1][1] * md[1][1]);
    let fx = f.value(x);
    let r_max = m.trunc_r;
    let mut value = inner;
    let mut error = 0.0;
    if delta < r_max {
        let npan = ((r_max - delta) / q.panel).ceil().max(1.0) as usize;
        let tol_pan = q.tol / npan as f64;
        for k in 0..npan {
            let a = delta + k as f64 * q.panel;
            let b = (a + q.panel).min(r_max);
            if b <= a {
                continue;
            }
            let mut radial = |r: f64| -> f64 {
                let nu = m.density_at(r);
                if nu == 0.0 {
                    return 0.0;
                }
                if m.dim == 1 {
                    nu * (f.value([x[0] + r, x[1]]) + f.value([x[0] - r, x[1]]) - 2.0 * fx)
                } else {
                    let dth = PI / q.angular_panels as f64;
                    let mut s = 0.0;
                    for p in 0..q.angular_panels {
                        s += gl5(p as f64 * dth, (p + 1) as f64 * dth, |th: f64| {
                            let (c, sn) = (th.cos(), th.sin());
                            f.value([x[0] + r * c, x[1] + r * sn]) + f.value([x[0] - r * c, x[1] - r * sn]) - 2.0 * fx
                        });
                    }
                    nu * r * s
                }
            };
            let (v, e) = adaptive_gl5(a, b, tol_pan, q.max_depth, &mut radial);
            value += v;
            error += e;
        }
    }
    if !value.is_finite() {
        return Err(Error::Numerical(format!("nonlocal operator at {x:?} is not finite")));
    }
    if error > 1e3 * q.tol.max(1e-12) * (1.0 + value.abs()) {
        return Err(Error::Numerical(format!(
            "nonlocal quadrature at {x:?} did not converge: value {value}, estimated error {error}"
        )));
    }
    Ok(Estimate { value, error })
}

/// `I_R[x, Φ]` for a quadratic test function with optional smooth base; the
/// quadratic part is exact, the base goes through [`nonlocal_smooth`].
pub fn nonlocal_operator(m: &LevyMeasure, phi: &QuadraticTest, x: Point, q: &NonlocalQuadrature) -> Result<Estimate> {
    let quad = nonlocal_of_quadratic(m, phi.gamma);
    match &phi.base {
        Some(b) if b.weight != 0.0 => {
            let e = nonlocal_smooth(m, b.field.as_ref(), x, q)?;
            Ok(Estimate {
                value: quad + b.weight * e.value,
                error: b.weight.abs() * e.error,
            })
        }
        _ => Ok(Estimate { value: quad, error: 0.0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, ScalarField, SmoothField, Smoothing, ZERO22};
    use proptest::prelude::*;

    #[test]
    fn validate_examples() {
        assert!(validate_measure(&LevyMeasure::uniform(1, 1.0)).is_ok());
        let r = validate_measure(&LevyMeasure::power(1, 0.5, 1.0)).unwrap();
        assert!((r.second_moment_inner - 4.0 / 3.0).abs() < 1e-6, "{}", r.second_moment_inner);
        let bad = LevyMeasure::power(1, 2.0, 1.0);
        let err = validate_measure(&bad).unwrap_err().to_string();
        assert!(err.contains("diverges"), "{err}");
        assert!(validate_measure(&LevyMeasure::power(2, 0.7, 1.5)).is_ok());
    }

    #[test]
    fn second_moment_examples() {
        let m = inner_second_moment(&LevyMeasure::uniform(1, 1.0), 0.5);
        assert!((m[0][0] - 0.083_333_333_333_333_33).abs() < 1e-15);
        let m = inner_second_moment(&LevyMeasure::power(1, 0.5, 1.0), 1.0);
        assert!((m[0][0] - 4.0 / 3.0).abs() < 1e-14);
        for d in [1e-3, 1e-6, 1e-9] {
            let m = inner_second_moment(&LevyMeasure::power(2, 0.5, 1.0), d);
            let want = std::f64::consts::PI * d.powf(1.5) / 1.5;
            assert!((m[0][0] - want).abs() <= 1e-12 * want && m[0][1] == 0.0);
        }
        let custom = LevyMeasure {
            dim: 1,
            density: RadialDensity::Custom {
                label: "r^-1.5".into(),
                f: Arc::new(|r: f64| r.powf(-1.5)),
            },
            trunc_r: 1.0,
        };
        assert!((inner_second_moment(&custom, 1.0)[0][0] - 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn operator_examples() {
        let m = LevyMeasure::uniform(1, 1.0);
        let q = NonlocalQuadrature::for_grid(0.05);
        let c = QuadraticTest::new(1, [0.0, 0.0], 3.0, [0.0, 0.0], ZERO22);
        assert_eq!(nonlocal_operator(&m, &c, [0.2, 0.0], &q).unwrap().value, 0.0);
        let a = QuadraticTest::new(1, [0.0, 0.0], 1.0, [2.5, 0.0], ZERO22);
        assert_eq!(nonlocal_operator(&m, &a, [0.2, 0.0], &q).unwrap().value, 0.0);
        let z2 = QuadraticTest::new(1, [0.0, 0.0], 0.0, [0.0, 0.0], [[1.0, 0.0], [0.0, 0.0]]);
        assert!((nonlocal_operator(&m, &z2, [0.0, 0.0], &q).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        // same quadratic through the generic quadrature path
        let e = nonlocal_smooth(&m, &z2, [0.0, 0.0], &q).unwrap();
        assert!((e.value - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn generic_path_matches_closed_form_in_2d() {
        let m = LevyMeasure::power(2, 0.5, 1.0);
        let q = NonlocalQuadrature::for_grid(0.05);
        let phi = QuadraticTest::new(2, [0.1, 0.2], 0.3, [1.0, -2.0], [[1.5, 0.4], [0.4, -0.7]]);
        let closed = nonlocal_of_quadratic(&m, phi.gamma);
        let quad = nonlocal_smooth(&m, &phi, [0.3, -0.1], &q).unwrap();
        assert!((quad.value - closed).abs() < 1e-8, "{} vs {closed}", quad.value);
    }

    #[test]
    fn reconstruction_at_node_matches_discrete_sum() {
        // On a uniform measure the staircase operator at a node is a positive
        // combination of nodal differences; check against the cell formula.
        let g = Grid::line(-2.0, 2.0, 81).unwrap();
        let f = Arc::new(ScalarField::from_fn(&g, |p| (-4.0 * p[0] * p[0]).exp()));
        let s = SmoothField::new(f.clone(), Smoothing::Staircase);
        let m = LevyMeasure::uniform(1, 1.0);
        let q = NonlocalQuadrature::for_grid(g.h[0]);
        let k0 = 40;
        let x = g.coords(k0);
        let e = nonlocal_smooth(&m, &s, x, &q).unwrap();
        // ∫ω(s)ds over one side of a node's bump is h/2 on each half-cell
        let h = g.h[0];
        let mut disc = 0.0;
        for k in 1..=20 {
            let w = if k == 20 { 0.5 * h } else { h };
            disc += w * (f.values[k0 + k] + f.values[k0 - k] - 2.0 * f.values[k0]);
        }
        assert!((e.value - disc).abs() < 1e-10, "{} vs {disc}", e.value);
    }

    proptest! {
        #[test]
        fn linear_in_phi(a in -2.0..2.0f64, b in -2.0..2.0f64, g1 in -3.0..3.0f64, g2 in -3.0..3.0f64) {
            let m = LevyMeasure::power(1, 0.5, 1.0);
            let q = NonlocalQuadrature::for_grid(0.05);
            let grid = Grid::line(-2.0, 2.0, 41).unwrap();
            let base = Arc::new(SmoothField::new(Arc::new(ScalarField::from_fn(&grid, |p| p[0].sin())), Smoothing::LocalTaylor));
            let phi = QuadraticTest::new(1, [0.0, 0.0], 0.0, [0.0, 0.0], [[g1, 0.0], [0.0, 0.0]]).with_base(base.clone(), 1.0);
            let psi = QuadraticTest::new(1, [0.0, 0.0], 0.0, [0.0, 0.0], [[g2, 0.0], [0.0, 0.0]]);
            let x = [0.1, 0.0];
            let ip = nonlocal_operator(&m, &phi, x, &q).unwrap();
            let is = nonlocal_operator(&m, &psi, x, &q).unwrap();
            let comb = QuadraticTest::new(1, [0.0, 0.0], 0.0, [0.0, 0.0], [[a * g1 + b * g2, 0.0], [0.0, 0.0]]).with_base(base, a);
            let ic = nonlocal_operator(&m, &comb, x, &q).unwrap();
            prop_assert!((ic.value - (a * ip.value + b * is.value)).abs() <= 1e-9 + ic.error + ip.error + is.error);
        }

        #[test]
        fn monotone_under_touching(c in 0.1..3.0f64, p in -2.0..2.0f64, x0 in -0.5..0.5f64) {
            // Φ - Ψ = c (z - x0)² ≥ 0 with minimum 0 at x0
            let m = LevyMeasure::power(1, 0.5, 1.0);
            let q = NonlocalQuadrature::for_grid(0.05);
            let grid = Grid::line(-2.0, 2.0, 41).unwrap();
            let base = Arc::new(SmoothField::new(Arc::new(ScalarField::from_fn(&grid, |z| (2.0 * z[0]).cos())), Smoothing::LocalTaylor));
            let psi = QuadraticTest::new(1, [x0, 0.0], 0.0, [p, 0.0], ZERO22).with_base(base.clone(), 1.0);
            let phi = QuadraticTest::new(1, [x0, 0.0], 0.0, [p, 0.0], [[2.0 * c, 0.0], [0.0, 0.0]]).with_base(base, 1.0);
            let a = nonlocal_operator(&m, &phi, [x0, 0.0], &q).unwrap();
            let b = nonlocal_operator(&m, &psi, [x0, 0.0], &q).unwrap();
            prop_assert!(a.value >= b.value - a.error - b.error);
        }

        #[test]
        fn bounded_by_caps(eps in 0.02..0.2f64, u in -1.0..1.0f64, v in -1.0..1.0f64) {
            // |I_R[x,Φ]| ≤ C ε^{-α} whenever the Hessian of a quadratic is capped by ε^{-α}
            let alpha = 0.5;
            let cap = eps.powf(-alpha);
            let m = LevyMeasure::uniform(2, 1.0);
            let phi = QuadraticTest::new(2, [0.0, 0.0], 0.0, [cap * u, 0.0], [[cap * u, cap * v / 2.0], [cap * v / 2.0, cap * v]]);
            let i = nonlocal_operator(&m, &phi, [0.0, 0.0], &NonlocalQuadrature::for_grid(0.1)).unwrap().value;
            let c = inner_second_moment(&m, 1.0)[0][0] * 2.0;
            prop_assert!(i.abs() <= c * cap);
        }
    }
}
