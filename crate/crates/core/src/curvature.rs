//! Integral curvature of a level set through a point,
//! `κ*[x,U] = K∗1{U ≥ U(x)} − K∗1{U < U(x)}` and its strict twin `κ_*`, for
//! even kernels supported in a ball.
//!
//! The indicator is bounded, so a small ball `B_δ₀` around the origin is
//! excluded. Its contribution is bounded by the kernel mass of the part of
//! `B_δ₀` where the sign of `U(x+z) − U(x)` is not fixed by the first-order
//! term; that mass, plus an angular refinement difference, is the error bar.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{dist, eval_test, mat_norm, norm, Grid, Point, QuadraticTest, ScalarField, Vec2};
use crate::quadrature::gl5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum KernelProfile {
    /// `K = C`, bounded.
    Bump,
    /// `K = C / |z|^{N+α}`.
    Power { alpha: f64 },
}

/// Radial kernel `K(z) = C(|z|)·profile(|z|)`, where the cutoff `C` is 1 on
/// `|z| ≤ R/2`, 0 beyond `R`, with a quintic smoothstep in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Kernel {
    pub dim: usize,
    pub profile: KernelProfile,
    pub support_r: f64,
}

fn cutoff_profile(r: f64, big_r: f64) -> f64 {
    let half = 0.5 * big_r;
    if r <= half {
        1.0
    } else if r >= big_r {
        0.0
    } else {
        let t = (r - half) / half;
        (1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)).max(0.0)
    }
}

impl Kernel {
    pub fn bump(dim: usize, support_r: f64) -> Result<Self> {
        Self::build(dim, KernelProfile::Bump, support_r)
    }

    pub fn power(dim: usize, alpha: f64, support_r: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("kernel exponent must be positive, got {alpha}")));
        }
        Self::build(dim, KernelProfile::Power { alpha }, support_r)
    }

    fn build(dim: usize, profile: KernelProfile, support_r: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("kernel dimension must be 1 or 2, got {dim}")));
        }
        if !(support_r > 0.0 && support_r.is_finite()) {
            return Err(Error::Config(format!("kernel support radius must be positive, got {support_r}")));
        }
        Ok(Kernel { dim, profile, support_r })
    }

    pub fn name(&self) -> String {
        match self.profile {
            KernelProfile::Bump => format!("bump({})", self.support_r),
            KernelProfile::Power { alpha } => format!("power({alpha}, {})", self.support_r),
        }
    }

    /// Radial profile `k(r)`, so `K(z) = k(|z|)`.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        if r >= self.support_r {
            return 0.0;
        }
        let c = cutoff_profile(r, self.support_r);
        match self.profile {
            KernelProfile::Bump => c,
            KernelProfile::Power { alpha } => {
                if r <= 0.0 {
                    f64::INFINITY
                } else {
                    c * r.powf(-(self.dim as f64) - alpha)
                }
            }
        }
    }

    #[inline]
    pub fn at(&self, z: Point) -> f64 {
        self.radial(norm(z))
    }

    fn sphere(&self) -> f64 {
        if self.dim == 1 {
            2.0
        } else {
            2.0 * PI
        }
    }

    /// `∫_a^b k(r) r^{N−1} dr` (the mass per unit angle of a radial shell).
    pub fn shell(&self, a: f64, b: f64) -> f64 {
        let big_r = self.support_r;
        let half = 0.5 * big_r;
        let (a, b) = (a.max(0.0), b.min(big_r));
        if b <= a {
            return 0.0;
        }
        let n = self.dim as f64;
        let mut total = 0.0;
        let (fa, fb) = (a, b.min(half));
        if fb > fa {
            total += match self.profile {
                KernelProfile::Bump => (fb.powf(n) - fa.powf(n)) / n,
                KernelProfile::Power { alpha } => {
                    if fa == 0.0 {
                        return f64::INFINITY;
                    }
                    (fa.powf(-alpha) - fb.powf(-alpha)) / alpha
                }
            };
        }
        let (ca, cb) = (a.max(half), b);
        if cb > ca {
            let panels = 8;
            let w = (cb - ca) / panels as f64;
            for i in 0..panels {
                let lo = ca + i as f64 * w;
                total += gl5(lo, lo + w, |r| self.radial(r) * r.powi(self.dim as i32 - 1));
            }
        }
        total
    }

    /// `∫_{δ ≤ |z|} K`.
    pub fn mass_outside(&self, delta: f64) -> f64 {
        self.sphere() * self.shell(delta, self.support_r)
    }

    /// `∫_{Q(r,e)} K` for the paraboloid `Q(r,e) = {r|z·e| ≤ |z − (z·e)e|²}`,
    /// computed on dyadic shells; `None` when the shell masses do not decay.
    pub fn paraboloid_mass(&self, r: f64) -> Option<f64> {
        if self.dim == 1 {
            // Q(r,e) = {0} on the line.
            return Some(0.0);
        }
        // angular measure of Q at radius ρ: |cos θ| ≤ c*
        let ang = |rho: f64| -> f64 {
            let c = 2.0 * rho / (r + (r * r + 4.0 * rho * rho).sqrt());
            2.0 * (PI - 2.0 * c.min(1.0).acos())
        };
        let f = |rho: f64| self.radial(rho) * rho * ang(rho);
        let mut total = 0.0;
        let mut hi = self.support_r;
        let mut last = f64::INFINITY;
        for _ in 0..80 {
            let lo = 0.5 * hi;
            let mut shell = 0.0;
            for k in 0..4 {
                let a = lo + (hi - lo) * k as f64 / 4.0;
                shell += gl5(a, a + 0.25 * (hi - lo), f);
            }
            total += shell;
            if shell < 1e-15 * total.max(1e-300) {
                return Some(total);
            }
            if hi < 1e-3 * self.support_r && shell >= (1.0 - 1e-3) * last {
                return None;
            }
            last = shell;
            hi = lo;
        }
        Some(total)
    }
}

/// Outcome of [`validate_kernel`].
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub kernel: String,
    pub even: bool,
    pub supported: bool,
    /// `(δ, δ·∫_{|z|≥δ} K)`.
    pub outer_mass: Vec<(f64, f64)>,
    /// `(r, r·∫_{Q(r,e)} K)`; radial kernels make the direction irrelevant.
    pub paraboloid: Vec<(f64, f64)>,
}

const SCALES: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn decays(seq: &[(f64, f64)]) -> bool {
    seq.windows(2).all(|w| w[1].1 < w[0].1 || (w[0].1 == 0.0 && w[1].1 == 0.0))
}

/// Samples evenness and support, then checks that `δ·∫_{|z|≥δ} K` and
/// `r·∫_{Q(r,e)} K` decrease along δ, r ∈ {0.2, 0.1, 0.05, 0.025}.
pub fn validate_kernel(k: &Kernel) -> Result<KernelReport> {
    let big_r = k.support_r;
    let mut even = true;
    let mut supported = true;
    for i in 0..64 {
        let th = 0.1 + 2.0 * PI * i as f64 / 64.0;
        for s in [0.05, 0.3, 0.7, 1.000_001, 1.3] {
            let rho = s * big_r;
            let z = if k.dim == 1 { [rho, 0.0] } else { [rho * th.cos(), rho * th.sin()] };
            let (a, b) = (k.at(z), k.at([-z[0], -z[1]]));
            if a != b || a < 0.0 {
                even = false;
            }
            if s >= 1.0 && a != 0.0 {
                supported = false;
            }
        }
    }
    let outer_mass: Vec<(f64, f64)> = SCALES.iter().map(|&d| (d, d * k.mass_outside(d * big_r))).collect();
    let mut paraboloid = Vec::new();
    for &r in &SCALES {
        match k.paraboloid_mass(r) {
            Some(m) => paraboloid.push((r, r * m)),
            None => {
                return Err(Error::Input(format!(
                    "kernel {} rejected: the integral over the paraboloid Q({r}, e) diverges",
                    k.name()
                )))
            }
        }
    }
    if !even || !supported {
        return Err(Error::Input(format!("kernel {} rejected: even={even}, supported={supported}", k.name())));
    }
    if !decays(&outer_mass) {
        return Err(Error::Input(format!("kernel {} rejected: δ·∫_(|z|≥δ) K does not decrease: {outer_mass:?}", k.name())));
    }
    if !decays(&paraboloid) {
        return Err(Error::Input(format!("kernel {} rejected: r·∫_Q(r,e) K does not decrease: {paraboloid:?}", k.name())));
    }
    Ok(KernelReport {
        kernel: k.name(),
        even,
        supported,
        outer_mass,
        paraboloid,
    })
}

/// A function whose level sets are measured, with what the error bar needs.
pub trait LevelFunction: Send + Sync {
    fn value(&self, z: Point) -> f64;
    fn grad(&self, z: Point) -> Vec2;
    /// Upper bound of the Hessian's operator norm on `B_r(x)`.
    fn hess_bound(&self, x: Point, r: f64) -> f64;
}

/// `ρ − |z − c|`: positive inside the ball of radius ρ around `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sphere {
    pub center: Point,
    pub radius: f64,
}

impl LevelFunction for Sphere {
    fn value(&self, z: Point) -> f64 {
        self.radius - dist(z, self.center)
    }
    fn grad(&self, z: Point) -> Vec2 {
        let d = dist(z, self.center);
        if d == 0.0 {
            return [0.0, 0.0];
        }
        [-(z[0] - self.center[0]) / d, -(z[1] - self.center[1]) / d]
    }
    fn hess_bound(&self, x: Point, r: f64) -> f64 {
        let d = dist(x, self.center) - r;
        if d > 0.0 {
            1.0 / d
        } else {
            f64::INFINITY
        }
    }
}

impl LevelFunction for QuadraticTest {
    fn value(&self, z: Point) -> f64 {
        eval_test(self, z).0
    }
    fn grad(&self, z: Point) -> Vec2 {
        eval_test(self, z).1
    }
    fn hess_bound(&self, _x: Point, _r: f64) -> f64 {
        if self.base.is_some() {
            f64::INFINITY
        } else {
            mat_norm(self.gamma)
        }
    }
}

/// Resolution of the polar quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureQuadrature {
    /// Radius of the excluded ball.
    pub delta0: f64,
    /// Rays in 2D, paired with their opposites; a multiple of 4.
    pub n_theta: usize,
    /// Radial samples per ray used to bracket sign changes.
    pub n_r: usize,
    /// Results whose error bar exceeds `max_error·(1 + |κ*|)` are flagged.
    pub max_error: f64,
}

impl CurvatureQuadrature {
    pub fn with_exclusion(delta0: f64) -> Self {
        CurvatureQuadrature {
            delta0,
            n_theta: 1024,
            n_r: 128,
            max_error: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureEstimate {
    pub kappa_star: f64,
    pub kappa_sub: f64,
    pub error: f64,
    pub flagged: bool,
}

/// Signed integral along one ray, `(weak, strict)` orientation: the weak
/// version counts `U = U(x)` as the superlevel side.
fn ray_integral(k: &Kernel, f: &dyn LevelFunction, x: Point, ux: f64, dir: Vec2, q: &CurvatureQuadrature) -> (f64, f64) {
    let (r0, r1) = (q.delta0, k.support_r);
    if r1 <= r0 {
        return (0.0, 0.0);
    }
    let ratio = (r1 / r0).powf(1.0 / (q.n_r - 1) as f64);
    let g = |r: f64| f.value([x[0] + r * dir[0], x[1] + r * dir[1]]) - ux;
    let mut out = [0.0f64; 2];
    let samples: Vec<(f64, f64)> = (0..q.n_r)
        .map(|i| {
            let r = if i + 1 == q.n_r { r1 } else { r0 * ratio.powi(i as i32) };
            (r, g(r))
        })
        .collect();
    for (slot, strict) in [(0usize, false), (1usize, true)] {
        let up = |s: f64| if strict { s > 0.0 } else { s >= 0.0 };
        let mut start = r0;
        let mut state = up(samples[0].1);
        let mut acc = 0.0;
        for w in samples.windows(2) {
            let (ra, _) = w[0];
            let (rb, sb) = w[1];
            if up(sb) == state {
                continue;
            }
            let (mut lo, mut hi) = (ra, rb);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if up(g(mid)) == state {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * r1 {
                    break;
                }
            }
            let cut = 0.5 * (lo + hi);
            let m = k.shell(start, cut);
            acc += if state { m } else { -m };
            start = cut;
            state = !state;
        }
        let m = k.shell(start, r1);
        acc += if state { m } else { -m };
        out[slot] = acc;
    }
    (out[0], out[1])
}

/// Kernel mass of the part of `B_δ₀` where the first-order term does not fix
/// the sign of `U(x+z) − U(x)`.
fn uncertain_mass(k: &Kernel, slope: f64, hess: f64, delta0: f64) -> f64 {
    if slope == 0.0 || !hess.is_finite() {
        return k.sphere() * k.shell(0.0, delta0);
    }
    if hess == 0.0 {
        return 0.0;
    }
    let s = hess / (2.0 * slope);
    if k.dim == 1 {
        // |z| ≥ 2|p|/M
        return 2.0 * k.shell(1.0 / s, delta0);
    }
    let f = |rho: f64| k.radial(rho) * rho * 4.0 * (rho * s).min(1.0).asin();
    let mut total = 0.0;
    let mut hi = delta0.min(k.support_r);
    for _ in 0..60 {
        let lo = 0.5 * hi;
        total += gl5(lo, hi, f);
        hi = lo;
    }
    total
}

/// `(κ*, κ_*)` of the level set of `f` through `x`, with an error bar.
pub fn kappa(x: Point, f: &dyn LevelFunction, k: &Kernel, q: &CurvatureQuadrature) -> CurvatureEstimate {
    let ux = f.value(x);
    let (star, sub, ang_err) = if k.dim == 1 {
        let (a, b) = ray_integral(k, f, x, ux, [1.0, 0.0], q);
        let (c, d) = ray_integral(k, f, x, ux, [-1.0, 0.0], q);
        (a + c, b + d, 0.0)
    } else {
        // Opposite rays are paired over a half turn that starts on the
        // tangent line, where the pair integrand is singular like
        // |θ − θ_t|^{-α}; θ = θ_t + π·S(τ) with the quintic smoothstep S
        // grades the rays so the midpoint rule in τ sees a bounded integrand.
        let half = q.n_theta / 2;
        let grad = f.grad(x);
        let theta_t = if norm(grad) > 0.0 { grad[1].atan2(grad[0]) + 0.5 * PI } else { 0.0 };
        let pairs: Vec<(f64, f64, f64)> = (0..half)
            .map(|j| {
                let t = (j as f64 + 0.5) / half as f64;
                let s5 = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
                let jac = 30.0 * t * t * (1.0 - t) * (1.0 - t) * PI;
                let th = theta_t + PI * s5;
                let dir = [th.cos(), th.sin()];
                let (a, b) = ray_integral(k, f, x, ux, dir, q);
                let (c, d) = ray_integral(k, f, x, ux, [-dir[0], -dir[1]], q);
                (a + c, b + d, jac)
            })
            .collect();
        let step = 1.0 / half as f64;
        let (mut s_all, mut t_all, mut s_even) = (0.0, 0.0, 0.0);
        for (j, &(s, t, w)) in pairs.iter().enumerate() {
            s_all += s * w;
            t_all += t * w;
            if j % 2 == 0 {
                s_even += s * w;
            }
        }
        (s_all * step, t_all * step, (s_all * step - 2.0 * s_even * step).abs())
    };
    let slope = norm(f.grad(x));
    let err = uncertain_mass(k, slope, f.hess_bound(x, q.delta0), q.delta0) + ang_err;
    CurvatureEstimate {
        kappa_star: star,
        kappa_sub: sub,
        error: err,
        flagged: !(err <= q.max_error * (1.0 + star.abs())),
    }
}

/// `(κ*, κ_*)` at every node of a grid field by a lattice sum over nodes
/// `δ₀ ≤ |y − x| < R`; values outside the box are linearly extrapolated
/// from the boundary, so affine fields stay flat up to the edge.
pub fn kappa_lattice(u: &ScalarField, k: &Kernel, delta0: f64) -> Vec<(f64, f64)> {
    let g: &Grid = &u.grid;
    let cell = if g.dim == 1 { g.h[0] } else { g.h[0] * g.h[1] };
    let reach = [
        (k.support_r / g.h[0]).ceil() as isize,
        if g.dim == 2 { (k.support_r / g.h[1]).ceil() as isize } else { 0 },
    ];
    let mut offsets: Vec<(isize, isize, f64)> = Vec::new();
    for dj in -reach[1]..=reach[1] {
        for di in -reach[0]..=reach[0] {
            let z = [di as f64 * g.h[0], dj as f64 * g.h[1] * (g.dim == 2) as i32 as f64];
            let r = norm(z);
            if r >= delta0 && r < k.support_r {
                offsets.push((di, dj, k.radial(r) * cell));
            }
        }
    }
    (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = g.ij(idx);
            let ux = u.values[idx];
            let (mut star, mut sub) = (0.0, 0.0);
            for &(di, dj, w) in &offsets {
                let v = u.at_extrapolated(i as isize + di, j as isize + dj);
                if v > ux {
                    star += w;
                    sub += w;
                } else if v < ux {
                    star -= w;
                    sub -= w;
                } else {
                    star += w;
                    sub -= w;
                }
            }
            (star, sub)
        })
        .collect()
}
