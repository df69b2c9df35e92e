//! Reference solutions used to check the games: the constant-speed eikonal
//! closed form, a fine explicit scheme for the linear nonlocal equation,
//! brute-force integral curvature, and the radius law of a shrinking ball.
//!
//! Nothing here calls the quadrature, interpolation or stepping code of the
//! game modules; only the kernel and measure densities are shared.

use std::f64::consts::PI;

use serde::Serialize;

use crate::curvature::Kernel;
use crate::error::{Error, Result};
use crate::fields::{Grid, Point, ScalarField};
use crate::levy::LevyMeasure;

// ---------------------------------------------------------------- eikonal

/// `u(t, x)` for `∂_t u + v|Du| = 0` with constant `v` and `τ = T − t`:
/// the max (v > 0) or min (v < 0) of `u_T` over the closed ball of radius
/// `|v|τ` around `x`, by dense sampling followed by a local pattern search.
pub fn eikonal_exact(v: f64, u_t: &dyn Fn(Point) -> f64, dim: usize, tau: f64, x: Point) -> f64 {
    let r = v.abs() * tau.max(0.0);
    if v == 0.0 || r == 0.0 {
        return u_t(x);
    }
    let sign = v.signum();
    let score = |p: Point| sign * u_t(p);
    let mut best = (score(x), x);
    if dim == 1 {
        let n = 4000;
        for k in 0..=n {
            let p = [x[0] - r + 2.0 * r * k as f64 / n as f64, 0.0];
            let s = score(p);
            if s > best.0 {
                best = (s, p);
            }
        }
    } else {
        let (nr, nt) = (200, 512);
        for a in 1..=nr {
            let rr = r * a as f64 / nr as f64;
            for b in 0..nt {
                let th = 2.0 * PI * b as f64 / nt as f64;
                let p = [x[0] + rr * th.cos(), x[1] + rr * th.sin()];
                let s = score(p);
                if s > best.0 {
                    best = (s, p);
                }
            }
        }
    }
    // pattern search, in polar coordinates about x in 2D so that optima on
    // the sphere can slide along it
    if dim == 1 {
        let mut step = 2.0 * r / 4000.0;
        while step > 1e-14 * (1.0 + r) {
            let mut moved = false;
            for d in [1.0, -1.0] {
                let p = [best.1[0] + step * d, 0.0];
                if (p[0] - x[0]).abs() <= r {
                    let s = score(p);
                    if s > best.0 {
                        best = (s, p);
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
    } else {
        let at = |rho: f64, th: f64| [x[0] + rho * th.cos(), x[1] + rho * th.sin()];
        let (dx, dy) = (best.1[0] - x[0], best.1[1] - x[1]);
        let (mut rho, mut th) = ((dx * dx + dy * dy).sqrt(), dy.atan2(dx));
        let (mut s_rho, mut s_th) = (r / 200.0, 2.0 * PI / 512.0);
        while s_rho > 1e-14 * (1.0 + r) || s_th > 1e-14 {
            let mut moved = false;
            for (d_rho, d_th) in [(s_rho, 0.0), (-s_rho, 0.0), (0.0, s_th), (0.0, -s_th)] {
                let (nr, nt) = ((rho + d_rho).clamp(0.0, r), th + d_th);
                let s = score(at(nr, nt));
                if s > best.0 {
                    best = (s, at(nr, nt));
                    rho = nr;
                    th = nt;
                    moved = true;
                }
            }
            if !moved {
                s_rho *= 0.5;
                s_th *= 0.5;
            }
        }
    }
    sign * best.0
}

// ---------------------------------------------------------------- PIDE

fn lerp_field(w: &[f64], g: &Grid, p: Point) -> f64 {
    let fi = ((p[0] - g.lo[0]) / g.h[0]).clamp(0.0, (g.n[0] - 1) as f64);
    let i0 = (fi.floor() as usize).min(g.n[0].saturating_sub(2));
    let a = fi - i0 as f64;
    if g.dim == 1 {
        let i1 = (i0 + 1).min(g.n[0] - 1);
        return (1.0 - a) * w[i0] + a * w[i1];
    }
    let fj = ((p[1] - g.lo[1]) / g.h[1]).clamp(0.0, (g.n[1] - 1) as f64);
    let j0 = (fj.floor() as usize).min(g.n[1].saturating_sub(2));
    let b = fj - j0 as f64;
    let (i1, j1) = ((i0 + 1).min(g.n[0] - 1), (j0 + 1).min(g.n[1] - 1));
    let at = |i: usize, j: usize| w[j * g.n[0] + i];
    (1.0 - a) * (1.0 - b) * at(i0, j0) + a * (1.0 - b) * at(i1, j0) + (1.0 - a) * b * at(i0, j1) + a * b * at(i1, j1)
}

// Composite Simpson in log r of `f(r)·r` over [a, b]; `n` even panels.
fn simpson_log(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (la, lb) = (a.ln(), b.ln());
    let hs = (lb - la) / n as f64;
    let mut s = 0.0;
    for k in 0..=n {
        let r = (la + k as f64 * hs).exp();
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * f(r) * r;
    }
    s * hs / 3.0
}

/// Explicit reference for `∂_s w = I_R[x, w]`, `w(0) = u_T`, in the
/// backward variable `s = T − t`.
#[derive(Clone, Debug)]
pub struct PideReference {
    /// Split radius; below it the second-order form is used.
    pub delta: f64,
    /// Radial Simpson panels per grid spacing on the outer part.
    pub panels_per_h: usize,
    /// Directions on the half circle (2D).
    pub n_theta: usize,
}

impl PideReference {
    pub fn for_grid(g: &Grid) -> Self {
        PideReference {
            delta: g.h[0],
            panels_per_h: 4,
            n_theta: 64,
        }
    }
}

/// Solves to `s = s_final` with steps `fine_dt`. The scheme is monotone when
/// `fine_dt · (ν(|z| ≥ δ) + N·M_δ/h²) ≤ 1`, with `M_δ` the inner second
/// moment per axis; a violation is a configuration error.
pub fn pide_reference(m: &LevyMeasure, u_t: &ScalarField, s_final: f64, fine_dt: f64, opts: &PideReference) -> Result<ScalarField> {
    let g = &u_t.grid;
    if m.dim != g.dim {
        return Err(Error::Config("measure and grid dimensions differ".into()));
    }
    let big_r = m.trunc_r;
    let delta = opts.delta.min(big_r);
    let dim = g.dim as f64;
    let sphere = if g.dim == 1 { 2.0 } else { 2.0 * PI };
    let density = |r: f64| m.density_at(r);
    // ν-mass outside δ and the per-axis inner second moment
    let outer_mass = if delta < big_r {
        sphere * simpson_log(delta, big_r, 4000, |r| density(r) * r.powi(g.dim as i32 - 1))
    } else {
        0.0
    };
    let inner = sphere / dim * simpson_log(delta * 1e-9, delta, 4000, |r| density(r) * r.powi(g.dim as i32 + 1));
    let h = g.h[0];
    let load = fine_dt * (outer_mass + dim * inner / (h * h));
    if !(load <= 1.0) {
        return Err(Error::Config(format!(
            "explicit reference unstable: dt·(ν(|z|≥δ) + N·M/h²) = {load:.3} > 1; reduce fine_dt"
        )));
    }
    // radial nodes on [δ, R] (Simpson, uniform in r)
    let mut radial: Vec<(f64, f64)> = Vec::new();
    if delta < big_r {
        let n = (((big_r - delta) / h) * opts.panels_per_h as f64).ceil() as usize * 2;
        let hr = (big_r - delta) / n as f64;
        for k in 0..=n {
            let r = delta + k as f64 * hr;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            radial.push((r, w * hr / 3.0 * density(r) * r.powi(g.dim as i32 - 1)));
        }
    }
    let dirs: Vec<(Point, f64)> = if g.dim == 1 {
        vec![([1.0, 0.0], 1.0)]
    } else {
        let nt = opts.n_theta.max(2);
        (0..nt)
            .map(|k| {
                let th = PI * (k as f64 + 0.5) / nt as f64;
                ([th.cos(), th.sin()], PI / nt as f64)
            })
            .collect()
    };
    let steps = (s_final / fine_dt).round() as usize;
    let mut w = u_t.values.clone();
    let mut next = w.clone();
    for _ in 0..steps {
        for idx in 0..g.len() {
            let x = g.coords(idx);
            let wx = w[idx];
            let mut total = 0.0;
            for &(d, dw) in &dirs {
                let mut line = 0.0;
                for &(r, rw) in &radial {
                    let a = lerp_field(&w, g, [x[0] + r * d[0], x[1] + r * d[1]]);
                    let b = lerp_field(&w, g, [x[0] - r * d[0], x[1] - r * d[1]]);
                    line += rw * (a + b - 2.0 * wx);
                }
                total += dw * line;
            }
            // second differences with edge-continued ghosts
            let (i, j) = (idx % g.n[0], idx / g.n[0]);
            let at = |ii: isize, jj: isize| {
                let ii = ii.clamp(0, g.n[0] as isize - 1) as usize;
                let jj = jj.clamp(0, g.n[1] as isize - 1) as usize;
                w[jj * g.n[0] + ii]
            };
            let (ii, jj) = (i as isize, j as isize);
            let mut lap = (at(ii + 1, jj) - 2.0 * wx + at(ii - 1, jj)) / (h * h);
            if g.dim == 2 {
                lap += (at(ii, jj + 1) - 2.0 * wx + at(ii, jj - 1)) / (g.h[1] * g.h[1]);
            }
            next[idx] = wx + fine_dt * (total + 0.5 * inner * lap);
        }
        std::mem::swap(&mut w, &mut next);
    }
    Ok(ScalarField { grid: g.clone(), values: w })
}

// ---------------------------------------------------------------- curvature

/// Brute-force integral curvature with a self-convergence error bar.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OracleCurvature {
    pub value: f64,
    /// Sum of the changes under halving `fine_n`, under a 10⁴ times wider
    /// exclusion radius, and under a 16 times larger rounding threshold near
    /// the tangent line.
    pub error: f64,
}

fn curvature_at_resolution(x: Point, u: &dyn Fn(Point) -> f64, k: &Kernel, n: usize, r_min: f64, noise_ulps: f64) -> f64 {
    let ux = u(x);
    let big_r = k.support_r;
    let dim = k.dim;
    let radial_mass = |a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        // a fixed panel count keeps the mass a smooth function of the ends
        simpson_log(a, b, 512, |r| k.radial(r) * r.powi(dim as i32 - 1))
    };
    let ray = |d: Point, r_min: f64| -> f64 {
        // geometric samples from r_min to R, sign changes refined by bisection
        let samples = n;
        let q = (big_r / r_min).powf(1.0 / samples as f64);
        let sign_at = |r: f64| u([x[0] + r * d[0], x[1] + r * d[1]]) >= ux;
        let mut total = 0.0;
        let mut a = r_min;
        let mut s_a = sign_at(a);
        let mut r = r_min;
        for _ in 0..samples {
            let r_next = (r * q).min(big_r);
            let s_next = sign_at(r_next);
            if s_next != s_a {
                let (mut lo, mut hi) = (r, r_next);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if sign_at(mid) == s_a {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let cut = 0.5 * (lo + hi);
                total += if s_a { 1.0 } else { -1.0 } * radial_mass(a, cut);
                a = cut;
                s_a = s_next;
            }
            r = r_next;
        }
        total + if s_a { 1.0 } else { -1.0 } * radial_mass(a, big_r)
    };
    if dim == 1 {
        return ray([1.0, 0.0], r_min) + ray([-1.0, 0.0], r_min);
    }
    // Opposite rays are paired so the inner masses cancel. What is left is
    // singular only along the tangent line, like |θ − θ₀|^{-α}; starting the
    // half turn there and substituting θ = θ₀ + π·τ⁴/(τ⁴ + (1−τ)⁴) makes the
    // integrand smooth for composite Simpson in τ.
    let step = 1e-6 * big_r;
    let gx = u([x[0] + step, x[1]]) - u([x[0] - step, x[1]]);
    let gy = u([x[0], x[1] + step]) - u([x[0], x[1] - step]);
    let theta0 = if gx == 0.0 && gy == 0.0 { 0.0 } else { gy.atan2(gx) + 0.5 * PI };
    let slope = (gx * gx + gy * gy).sqrt() / (2.0 * step);
    // below this radius the sign of u(x + r·d) − u(x) is rounding noise
    let noise = noise_ulps * f64::EPSILON * (1.0 + ux.abs());
    let pair = |th: f64| {
        let d = [th.cos(), th.sin()];
        let r0 = r_min.max(noise / (slope * (th - theta0).sin().abs()).max(1e-300)).min(big_r);
        ray(d, r0) + ray([-d[0], -d[1]], r0)
    };
    let m = 2 * (n / 2).max(2);
    let mut total = 0.0;
    for j in 1..m {
        let t = j as f64 / m as f64;
        let (a4, b4) = (t.powi(4), (1.0 - t).powi(4));
        let sig = a4 / (a4 + b4);
        let dsig = 4.0 * (t.powi(3) * b4 + a4 * (1.0 - t).powi(3)) / (a4 + b4).powi(2);
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        total += w * pair(theta0 + PI * sig) * PI * dsig;
    }
    // both ends carry zero weight: the Jacobian vanishes to third order
    total / (3.0 * m as f64)
}

/// `κ*[x, u]` at fine resolution: `fine_n` rays and `fine_n` geometric radial
/// samples per ray between `1e-10·R` and `R`; in 2D the angle runs over
/// opposite-ray pairs with `fine_n` angles graded toward the tangent line.
pub fn curvature_bruteforce(x: Point, u: &dyn Fn(Point) -> f64, k: &Kernel, fine_n: usize) -> OracleCurvature {
    let r_min = 1e-10 * k.support_r;
    let at = |n: usize, r: f64, ulps: f64| curvature_at_resolution(x, u, k, n, r, ulps);
    let fine = at(fine_n, r_min, 4.0);
    let coarse = at((fine_n / 2).max(2), r_min, 4.0);
    let wider = at(fine_n, 1e4 * r_min, 4.0);
    let noisier = at(fine_n, r_min, 64.0);
    OracleCurvature {
        value: fine,
        error: (fine - coarse).abs() + (fine - wider).abs() + (fine - noisier).abs(),
    }
}

/// Integral curvature of the ball of radius `rho` at a boundary point,
/// the ball being the superlevel side.
pub fn ball_curvature(k: &Kernel, rho: f64, fine_n: usize) -> OracleCurvature {
    let c = [-rho, 0.0];
    let u = move |p: Point| rho - ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
    curvature_bruteforce([0.0, 0.0], &u, k, fine_n)
}

// ---------------------------------------------------------------- radius law

/// Radius of a ball evolving by its own integral curvature, in the backward
/// variable `s = T − t`.
#[derive(Clone, Debug, Serialize)]
pub struct RadiusCurve {
    pub kernel: String,
    pub rho_t: f64,
    /// `(s, ρ)` samples.
    pub samples: Vec<(f64, f64)>,
    /// The radius reached `rho_min` before `s_final`.
    pub truncated: bool,
}

impl RadiusCurve {
    /// `ρ` at `s` by linear interpolation; 0 past a truncation.
    pub fn at(&self, s: f64) -> f64 {
        let pts = &self.samples;
        if s <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            if s <= w[1].0 {
                let a = (s - w[0].0) / (w[1].0 - w[0].0);
                return (1.0 - a) * w[0].1 + a * w[1].1;
            }
        }
        if self.truncated {
            0.0
        } else {
            pts[pts.len() - 1].1
        }
    }
}

/// Tabulated `κ̄(ρ)` on a log grid, cubic Hermite in `ln ρ`.
#[derive(Clone, Debug)]
pub struct CurvatureTable {
    log_rho: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CurvatureTable {
    pub fn from_fn(rho_min: f64, rho_max: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = n.max(3);
        let log_rho: Vec<f64> = (0..n).map(|k| rho_min.ln() + (rho_max / rho_min).ln() * k as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = log_rho.iter().map(|l| f(l.exp())).collect();
        let slopes = (0..n)
            .map(|k| {
                let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
                (values[b] - values[a]) / (log_rho[b] - log_rho[a])
            })
            .collect();
        CurvatureTable { log_rho, values, slopes }
    }

    pub fn kernel_balls(k: &Kernel, rho_min: f64, rho_max: f64, n: usize, fine_n: usize) -> Self {
        Self::from_fn(rho_min, rho_max, n, |r| ball_curvature(k, r, fine_n).value)
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let l = rho.ln().clamp(self.log_rho[0], *self.log_rho.last().unwrap());
        let n = self.log_rho.len();
        let mut k = self.log_rho.partition_point(|&v| v <= l).saturating_sub(1);
        k = k.min(n - 2);
        let (x0, x1) = (self.log_rho[k], self.log_rho[k + 1]);
        let hh = x1 - x0;
        let t = (l - x0) / hh;
        let (h00, h10, h01, h11) = (
            2.0 * t.powi(3) - 3.0 * t * t + 1.0,
            t.powi(3) - 2.0 * t * t + t,
            -2.0 * t.powi(3) + 3.0 * t * t,
            t.powi(3) - t * t,
        );
        h00 * self.values[k] + h10 * hh * self.slopes[k] + h01 * self.values[k + 1] + h11 * hh * self.slopes[k + 1]
    }

    pub fn rho_min(&self) -> f64 {
        self.log_rho[0].exp()
    }
}

/// Integrates `dρ/ds = κ̄(ρ)` from `ρ(0) = rho_t` by classical RK4 with step
/// `ds`. Balls have `κ̄ < 0`, so the radius shrinks as `s` grows; the curve is
/// truncated when it leaves the table range.
pub fn radius_ode(table: &CurvatureTable, kernel_name: &str, rho_t: f64, s_final: f64, ds: f64) -> RadiusCurve {
    let f = |r: f64| table.eval(r);
    let mut samples = vec![(0.0, rho_t)];
    let (mut s, mut rho) = (0.0, rho_t);
    let mut truncated = false;
    let steps = (s_final / ds).ceil() as usize;
    for k in 0..steps {
        let hstep = (s_final - k as f64 * ds).min(ds);
        let k1 = f(rho);
        let k2 = f((rho + 0.5 * hstep * k1).max(1e-300));
        let k3 = f((rho + 0.5 * hstep * k2).max(1e-300));
        let k4 = f((rho + hstep * k3).max(1e-300));
        let next = rho + hstep / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += hstep;
        if !(next > table.rho_min()) {
            truncated = true;
            break;
        }
        rho = next;
        samples.push((s, rho));
    }
    RadiusCurve {
        kernel: kernel_name.to_string(),
        rho_t,
        samples,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eikonal_examples() {
        let u = |p: Point| -p[0].abs();
        assert_eq!(eikonal_exact(1.0, &u, 1, 0.0, [0.5, 0.0]), -0.5);
        assert!((eikonal_exact(1.0, &u, 1, 0.3, [0.5, 0.0]) + 0.2).abs() < 1e-12);
        assert!((eikonal_exact(-1.0, &u, 1, 0.3, [0.5, 0.0]) + 0.8).abs() < 1e-12);
        assert_eq!(eikonal_exact(0.0, &u, 1, 0.3, [0.5, 0.0]), -0.5);
        let cone = |p: Point| -(p[0] * p[0] + p[1] * p[1]).sqrt();
        assert!((eikonal_exact(1.0, &cone, 2, 0.2, [0.5, 0.3]) + (0.34f64.sqrt() - 0.2)).abs() < 1e-9);
    }

    #[test]
    fn pide_reference_examples() {
        let g = Grid::line(-2.0, 2.0, 401).unwrap();
        let m = LevyMeasure::uniform(1, 1.0);
        let opts = PideReference::for_grid(&g);
        let c = ScalarField::constant(&g, 0.7);
        let w = pide_reference(&m, &c, 0.05, 0.01, &opts).unwrap();
        assert!(w.values.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let q = ScalarField::from_fn(&g, |x| 0.5 * x[0] * x[0]);
        let w = pide_reference(&m, &q, 0.01, 0.01, &opts).unwrap();
        let mid = g.nearest([0.0, 0.0]);
        assert!((w.values[mid] - 0.01 / 3.0).abs() < 1e-6, "{}", w.values[mid]);
        assert!(matches!(pide_reference(&m, &q, 0.6, 0.6, &opts), Err(Error::Config(_))));
    }

    #[test]
    fn pide_reference_self_converges() {
        let g = Grid::line(-2.0, 2.0, 161).unwrap();
        let m = LevyMeasure::uniform(1, 1.0);
        let opts = PideReference::for_grid(&g);
        let u = ScalarField::from_fn(&g, |x| (-4.0 * x[0] * x[0]).exp());
        let run = |dt: f64| pide_reference(&m, &u, 0.2, dt, &opts).unwrap();
        let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
        let change = |p: &ScalarField| p.values.iter().zip(&u.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let diff = |p: &ScalarField, q: &ScalarField| p.values.iter().zip(&q.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff(&b, &c) < 0.01 * change(&c));
        assert!(diff(&b, &c) < diff(&a, &b));
    }

    #[test]
    fn curvature_examples() {
        let k = Kernel::power(2, 0.5, 1.0).unwrap();
        let plane = |p: Point| 0.3 * p[0] - 0.8 * p[1];
        let flat = curvature_bruteforce([0.1, 0.2], &plane, &k, 256);
        assert!(flat.value.abs() < 1e-6, "{flat:?}");
        let b = ball_curvature(&k, 0.5, 512);
        let b2 = ball_curvature(&k, 0.5, 1024);
        assert!(b.value < 0.0);
        assert!((b.value - b2.value).abs() < 1e-3 * b2.value.abs(), "{b:?} {b2:?}");
        let vals: Vec<f64> = [0.3, 0.5, 0.7].iter().map(|&r| ball_curvature(&k, r, 512).value).collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2], "{vals:?}");
        // 1D: a ball is an interval, balanced once it is at least R long
        let k1 = Kernel::power(1, 0.5, 0.5).unwrap();
        assert!(ball_curvature(&k1, 0.3, 256).value.abs() < 1e-9);
        assert!(ball_curvature(&k1, 0.1, 256).value < 0.0);
    }

    #[test]
    fn radius_ode_examples() {
        let zero = CurvatureTable::from_fn(0.01, 1.0, 10, |_| 0.0);
        let c = radius_ode(&zero, "flat", 0.5, 0.3, 0.01);
        assert!(c.samples.iter().all(|&(_, r)| (r - 0.5).abs() < 1e-15) && !c.truncated);
        let lin = CurvatureTable::from_fn(0.01, 1.0, 10, |_| -2.0);
        let c = radius_ode(&lin, "const", 0.5, 0.2, 0.01);
        assert!((c.at(0.1) - 0.3).abs() < 1e-12 && (c.at(0.2) - 0.1).abs() < 1e-12);
        let c = radius_ode(&lin, "const", 0.5, 0.5, 0.01);
        assert!(c.truncated && c.at(0.5) == 0.0);
    }

    #[test]
    fn radius_ode_self_converges() {
        let k = Kernel::power(2, 0.5, 1.0).unwrap();
        let table = CurvatureTable::kernel_balls(&k, 0.02, 0.5, 25, 256);
        let a = radius_ode(&table, "power", 0.5, 0.03, 0.001);
        let b = radius_ode(&table, "power", 0.5, 0.03, 0.0005);
        for s in [0.01, 0.02, 0.03] {
            assert!((a.at(s) - b.at(s)).abs() < 0.005 * b.at(s), "{} {}", a.at(s), b.at(s));
        }
    }
}
