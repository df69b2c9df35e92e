//! Box grids, grid-sampled fields, and the C² test functions the players pick.
//!
//! Points, gradients and Hessians are fixed-size arrays; in one dimension the
//! second component is carried as zero and ignored.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];
pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const ZERO2: Vec2 = [0.0, 0.0];
pub const ZERO22: Mat2 = [[0.0, 0.0], [0.0, 0.0]];

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[inline]
pub fn norm(v: Vec2) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Frobenius norm.
#[inline]
pub fn mat_norm(a: Mat2) -> f64 {
    (a[0][0].powi(2) + a[0][1].powi(2) + a[1][0].powi(2) + a[1][1].powi(2)).sqrt()
}

/// Uniform tensor grid on a box in one or two dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
    pub n: [usize; 2],
    pub h: Vec2,
}

impl Grid {
    pub fn new(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        let dim = lo.len();
        if !(dim == 1 || dim == 2) || hi.len() != dim || n.len() != dim {
            return Err(Error::Input(format!(
                "grid needs matching lo/hi/n of length 1 or 2, got {}/{}/{}",
                lo.len(),
                hi.len(),
                n.len()
            )));
        }
        let mut g = Grid {
            dim,
            lo: ZERO2,
            hi: ZERO2,
            n: [1, 1],
            h: [1.0, 1.0],
        };
        for a in 0..dim {
            if !(lo[a].is_finite() && hi[a].is_finite()) || hi[a] <= lo[a] {
                return Err(Error::Input(format!("grid axis {a}: need lo < hi, got {} .. {}", lo[a], hi[a])));
            }
            if n[a] < 3 {
                return Err(Error::Input(format!("grid axis {a}: need at least 3 points, got {}", n[a])));
            }
            g.lo[a] = lo[a];
            g.hi[a] = hi[a];
            g.n[a] = n[a];
            g.h[a] = (hi[a] - lo[a]) / (n[a] - 1) as f64;
        }
        Ok(g)
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(&[lo], &[hi], &[n])
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(&[lo, lo], &[hi, hi], &[n, n])
    }

    /// Grid on `[lo, hi]^dim` whose spacing is as close as possible to `h`
    /// without exceeding it.
    pub fn with_spacing(dim: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Input(format!("spacing must be positive, got {h}")));
        }
        let n = (((hi - lo) / h) - 1e-9).ceil() as usize + 1;
        match dim {
            1 => Self::line(lo, hi, n.max(3)),
            2 => Self::square(lo, hi, n.max(3)),
            _ => Err(Error::Input(format!("dimension {dim} not supported"))),
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.n[0], idx / self.n[0])
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        let x = self.lo[0] + i as f64 * self.h[0];
        let y = if self.dim == 2 { self.lo[1] + j as f64 * self.h[1] } else { 0.0 };
        [x, y]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> Point {
        let (i, j) = self.ij(idx);
        self.node(i, j)
    }

    /// Index of the node nearest to `x` after clamping to the box.
    pub fn nearest(&self, x: Point) -> usize {
        let mut ij = [0usize; 2];
        for a in 0..self.dim {
            let s = ((x[a] - self.lo[a]) / self.h[a]).round();
            ij[a] = s.clamp(0.0, (self.n[a] - 1) as f64) as usize;
        }
        self.index(ij[0], ij[1])
    }

    /// In-box nodes `y` with `|y - x| <= r`, in index order.
    pub fn nodes_within(&self, x: Point, r: f64) -> Vec<usize> {
        let tol = 1e-9 * self.h[0];
        let mut out = Vec::new();
        let span = |a: usize| -> (usize, usize) {
            if a >= self.dim {
                return (0, 0);
            }
            let lo = ((x[a] - r - self.lo[a]) / self.h[a] - 1e-9).ceil().max(0.0);
            let hi = ((x[a] + r - self.lo[a]) / self.h[a] + 1e-9).floor().min((self.n[a] - 1) as f64);
            if hi < lo {
                (1, 0)
            } else {
                (lo as usize, hi as usize)
            }
        };
        let (i0, i1) = span(0);
        let (j0, j1) = span(1);
        if i1 < i0 || j1 < j0 {
            return out;
        }
        for j in j0..=j1 {
            for i in i0..=i1 {
                let y = self.node(i, j);
                if dist(x, y) <= r + tol {
                    out.push(self.index(i, j));
                }
            }
        }
        out
    }

    /// Lattice points `y` (in or outside the box) with `|y - x| <= r`, as
    /// signed lattice indices and coordinates.
    pub fn lattice_within(&self, x: Point, r: f64) -> Vec<([isize; 2], Point)> {
        let tol = 1e-9 * self.h[0];
        let span = |a: usize| -> (isize, isize) {
            if a >= self.dim {
                return (0, 0);
            }
            let lo = ((x[a] - r - self.lo[a]) / self.h[a] - 1e-9).ceil() as isize;
            let hi = ((x[a] + r - self.lo[a]) / self.h[a] + 1e-9).floor() as isize;
            (lo, hi)
        };
        let (i0, i1) = span(0);
        let (j0, j1) = span(1);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let mut y = [self.lo[0] + i as f64 * self.h[0], 0.0];
                if self.dim == 2 {
                    y[1] = self.lo[1] + j as f64 * self.h[1];
                }
                if dist(x, y) <= r + tol {
                    out.push(([i, j], y));
                }
            }
        }
        out
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lo[a] - 1e-12 && x[a] <= self.hi[a] + 1e-12)
    }
}

/// Real function sampled on a [`Grid`], extended outside the box by the
/// value at the nearest boundary point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("field value at node {k} is not finite")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.coords(k))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Value at integer indices, clamped into the box.
    #[inline]
    pub fn at_clamped(&self, i: isize, j: isize) -> f64 {
        let g = &self.grid;
        let i = i.clamp(0, g.n[0] as isize - 1) as usize;
        let j = j.clamp(0, g.n[1] as isize - 1) as usize;
        self.values[g.index(i, j)]
    }

    /// Value at a lattice index that may lie outside the box: the nearest
    /// boundary value plus a one-sided first-order step along each axis.
    pub fn at_extrapolated(&self, i: isize, j: isize) -> f64 {
        let g = &self.grid;
        let (ci, cj) = (i.clamp(0, g.n[0] as isize - 1), j.clamp(0, g.n[1] as isize - 1));
        let mut v = self.at_clamped(ci, cj);
        if i != ci && g.n[0] > 1 {
            let inward = if i < ci { ci + 1 } else { ci - 1 };
            v += (i - ci).abs() as f64 * (self.at_clamped(ci, cj) - self.at_clamped(inward, cj));
        }
        if j != cj && g.n[1] > 1 {
            let inward = if j < cj { cj + 1 } else { cj - 1 };
            v += (j - cj).abs() as f64 * (self.at_clamped(ci, cj) - self.at_clamped(ci, inward));
        }
        v
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Multilinear interpolation inside the box, constant continuation outside.
pub fn interpolate(field: &ScalarField, x: Point) -> Result<f64> {
    let g = &field.grid;
    if !(0..g.dim).all(|a| x[a].is_finite()) {
        return Err(Error::Input(format!("interpolation point {x:?} is not finite")));
    }
    let mut base = [0isize; 2];
    let mut frac = [0.0f64; 2];
    for a in 0..g.dim {
        let s = ((x[a] - g.lo[a]) / g.h[a]).clamp(0.0, (g.n[a] - 1) as f64);
        let i = (s.floor() as isize).min(g.n[a] as isize - 2);
        base[a] = i;
        frac[a] = s - i as f64;
    }
    let v = if g.dim == 1 {
        let (a, b) = (field.at_clamped(base[0], 0), field.at_clamped(base[0] + 1, 0));
        a + frac[0] * (b - a)
    } else {
        let (i, j) = (base[0], base[1]);
        let v00 = field.at_clamped(i, j);
        let v10 = field.at_clamped(i + 1, j);
        let v01 = field.at_clamped(i, j + 1);
        let v11 = field.at_clamped(i + 1, j + 1);
        let (s, t) = (frac[0], frac[1]);
        (1.0 - t) * ((1.0 - s) * v00 + s * v10) + t * ((1.0 - s) * v01 + s * v11)
    };
    Ok(v)
}

/// A C² function with exact value, gradient and Hessian.
pub trait TestFunction: Send + Sync {
    fn value(&self, z: Point) -> f64;
    fn grad(&self, z: Point) -> Vec2;
    fn hess(&self, z: Point) -> Mat2;
}

// Partition-of-unity bump on the node lattice: 1 on |s| <= 1/4, 0 on
// |s| >= 3/4, degree-nine smoothstep (C⁴) in between. Shifted copies sum to one.
#[inline]
fn smoothstep(t: f64) -> (f64, f64, f64) {
    let u = 1.0 - t;
    let tu = t * u;
    let t5 = t * t * t * t * t;
    (
        t5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t)))),
        630.0 * tu * tu * tu * tu,
        2520.0 * tu * tu * tu * (1.0 - 2.0 * t),
    )
}

/// Returns (ω, ω', ω'') at lattice offset `s` (in units of h).
#[inline]
fn pu_weight(s: f64) -> (f64, f64, f64) {
    let a = s.abs();
    if a <= 0.25 {
        (1.0, 0.0, 0.0)
    } else if a >= 0.75 {
        (0.0, 0.0, 0.0)
    } else {
        // Evaluate from the nearer end so that ω(s) + ω(s − 1) = 1 to rounding.
        let t = (a - 0.25) * 2.0;
        let (v, d1, d2) = if t <= 0.5 {
            smoothstep(t)
        } else {
            let (w, e1, e2) = smoothstep(1.5 - 2.0 * a);
            (1.0 - w, e1, -e2)
        };
        let sg = s.signum();
        (1.0 - v, -sg * 2.0 * d1, -4.0 * d2)
    }
}

/// How a grid field is lifted to a C² function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothing {
    /// Blend of nodal constants: flat near every node, interpolating, with
    /// nonnegative weights.
    Staircase,
    /// Blend of nodal second-order Taylor models from centered differences;
    /// reproduces quadratics.
    LocalTaylor,
}

/// C² interpolating reconstruction of a [`ScalarField`].
#[derive(Clone, Debug)]
pub struct SmoothField {
    pub field: Arc<ScalarField>,
    pub kind: Smoothing,
    taylor: Vec<(Vec2, Mat2)>,
}

impl SmoothField {
    pub fn new(field: Arc<ScalarField>, kind: Smoothing) -> Self {
        let taylor = match kind {
            Smoothing::Staircase => Vec::new(),
            Smoothing::LocalTaylor => nodal_derivatives(&field),
        };
        SmoothField { field, kind, taylor }
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    // Sum over the (at most 2 per axis) lattice nodes whose bump covers z.
    fn eval(&self, z: Point) -> (f64, Vec2, Mat2) {
        let g = &self.field.grid;
        let mut idx = [[0isize; 2]; 2];
        let mut w = [[(0.0, 0.0, 0.0); 2]; 2];
        let mut cnt = [1usize, 1usize];
        let mut off = [[0.0f64; 2]; 2];
        for a in 0..2 {
            if a >= g.dim {
                idx[a][0] = 0;
                w[a][0] = (1.0, 0.0, 0.0);
                off[a][0] = 0.0;
                continue;
            }
            let s = (z[a] - g.lo[a]) / g.h[a];
            let i0 = s.floor() as isize;
            let mut c = 0;
            for i in [i0, i0 + 1] {
                let ds = s - i as f64;
                let wt = pu_weight(ds);
                if wt.0 != 0.0 || wt.1 != 0.0 || wt.2 != 0.0 {
                    idx[a][c] = i;
                    w[a][c] = (wt.0, wt.1 / g.h[a], wt.2 / (g.h[a] * g.h[a]));
                    off[a][c] = ds * g.h[a];
                    c += 1;
                }
            }
            cnt[a] = c;
        }
        let mut val = 0.0;
        let mut gr = ZERO2;
        let mut he = ZERO22;
        for q in 0..cnt[1] {
            for p in 0..cnt[0] {
                let (i, j) = (idx[0][p], idx[1][q]);
                let (wx, wy) = (w[0][p], w[1][q]);
                let omega = wx.0 * wy.0;
                let d_omega = [wx.1 * wy.0, wx.0 * wy.1];
                let dd_omega = [[wx.2 * wy.0, wx.1 * wy.1], [wx.1 * wy.1, wx.0 * wy.2]];
                let (tv, tg, th) = self.nodal_model(i, j, [off[0][p], off[1][q]]);
                val += omega * tv;
                for a in 0..2 {
                    gr[a] += d_omega[a] * tv + omega * tg[a];
                    for b in 0..2 {
                        he[a][b] += dd_omega[a][b] * tv + d_omega[a] * tg[b] + d_omega[b] * tg[a] + omega * th[a][b];
                    }
                }
            }
        }
        (val, gr, he)
    }

    // Model attached to lattice node (i, j), possibly a ghost outside the box,
    // evaluated at displacement `s` from that node.
    fn nodal_model(&self, i: isize, j: isize, s: Vec2) -> (f64, Vec2, Mat2) {
        let g = &self.field.grid;
        let u = self.field.at_clamped(i, j);
        let inside = i >= 0 && (i as usize) < g.n[0] && j >= 0 && (j as usize) < g.n[1];
        if self.kind == Smoothing::Staircase || !inside {
            return (u, ZERO2, ZERO22);
        }
        let (gv, hm) = self.taylor[g.index(i as usize, j as usize)];
        let hs = [hm[0][0] * s[0] + hm[0][1] * s[1], hm[1][0] * s[0] + hm[1][1] * s[1]];
        let v = u + gv[0] * s[0] + gv[1] * s[1] + 0.5 * (s[0] * hs[0] + s[1] * hs[1]);
        (v, [gv[0] + hs[0], gv[1] + hs[1]], hm)
    }
}

fn nodal_derivatives(field: &ScalarField) -> Vec<(Vec2, Mat2)> {
    let g = &field.grid;
    (0..g.len())
        .map(|k| {
            let (i, j) = g.ij(k);
            let (i, j) = (i as isize, j as isize);
            let u = |a: isize, b: isize| field.at_clamped(i + a, j + b);
            let (hx, hy) = (g.h[0], g.h[1]);
            let mut gr = [(u(1, 0) - u(-1, 0)) / (2.0 * hx), 0.0];
            let mut he = [[(u(1, 0) - 2.0 * u(0, 0) + u(-1, 0)) / (hx * hx), 0.0], [0.0, 0.0]];
            if g.dim == 2 {
                gr[1] = (u(0, 1) - u(0, -1)) / (2.0 * hy);
                he[1][1] = (u(0, 1) - 2.0 * u(0, 0) + u(0, -1)) / (hy * hy);
                let c = (u(1, 1) - u(1, -1) - u(-1, 1) + u(-1, -1)) / (4.0 * hx * hy);
                he[0][1] = c;
                he[1][0] = c;
            }
            (gr, he)
        })
        .collect()
}

impl TestFunction for SmoothField {
    fn value(&self, z: Point) -> f64 {
        self.eval(z).0
    }
    fn grad(&self, z: Point) -> Vec2 {
        self.eval(z).1
    }
    fn hess(&self, z: Point) -> Mat2 {
        self.eval(z).2
    }
}

/// Optional smooth field added to a quadratic, with a scalar weight.
#[derive(Clone, Debug)]
pub struct Base {
    pub field: Arc<SmoothField>,
    pub weight: f64,
}

/// Φ(z) = c + p·(z−x₀) + ½(z−x₀)ᵀΓ(z−x₀), plus an optional weighted smooth base.
#[derive(Clone, Debug)]
pub struct QuadraticTest {
    pub dim: usize,
    pub center: Point,
    pub c: f64,
    pub p: Vec2,
    pub gamma: Mat2,
    pub base: Option<Base>,
}

impl QuadraticTest {
    pub fn new(dim: usize, center: Point, c: f64, p: Vec2, gamma: Mat2) -> Self {
        let mut q = QuadraticTest {
            dim,
            center,
            c,
            p,
            gamma: [[gamma[0][0], 0.5 * (gamma[0][1] + gamma[1][0])], [0.5 * (gamma[0][1] + gamma[1][0]), gamma[1][1]]],
            base: None,
        };
        if dim == 1 {
            q.p[1] = 0.0;
            q.gamma = [[q.gamma[0][0], 0.0], [0.0, 0.0]];
        }
        q
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, ZERO2, 0.0, ZERO2, ZERO22)
    }

    pub fn with_base(mut self, field: Arc<SmoothField>, weight: f64) -> Self {
        self.base = Some(Base { field, weight });
        self
    }

    /// Multiplies the non-constant part by `s` about the value at `x`, then
    /// shifts by `shift`.
    pub fn rescaled_about(&self, x: Point, s: f64, shift: f64) -> Self {
        let v0 = self.value(x);
        let mut q = self.clone();
        q.p = [s * q.p[0], s * q.p[1]];
        for a in 0..2 {
            for b in 0..2 {
                q.gamma[a][b] *= s;
            }
        }
        if let Some(b) = q.base.as_mut() {
            b.weight *= s;
        }
        // c' chosen so that q'(x) = v0 + shift
        q.c = 0.0;
        let v1 = q.value(x);
        q.c = v0 + shift - v1;
        q
    }

    fn quad_part(&self, z: Point) -> (f64, Vec2, Mat2) {
        let d = [z[0] - self.center[0], z[1] - self.center[1]];
        let gd = [
            self.gamma[0][0] * d[0] + self.gamma[0][1] * d[1],
            self.gamma[1][0] * d[0] + self.gamma[1][1] * d[1],
        ];
        let v = self.c + self.p[0] * d[0] + self.p[1] * d[1] + 0.5 * (d[0] * gd[0] + d[1] * gd[1]);
        (v, [self.p[0] + gd[0], self.p[1] + gd[1]], self.gamma)
    }
}

impl TestFunction for QuadraticTest {
    fn value(&self, z: Point) -> f64 {
        eval_test(self, z).0
    }
    fn grad(&self, z: Point) -> Vec2 {
        eval_test(self, z).1
    }
    fn hess(&self, z: Point) -> Mat2 {
        eval_test(self, z).2
    }
}

/// Value, gradient and Hessian of a quadratic test function.
pub fn eval_test(q: &QuadraticTest, x: Point) -> (f64, Vec2, Mat2) {
    let (mut v, mut g, mut h) = q.quad_part(x);
    if let Some(b) = &q.base {
        if b.weight != 0.0 {
            let (bv, bg, bh) = b.field.eval(x);
            v += b.weight * bv;
            for a in 0..2 {
                g[a] += b.weight * bg[a];
                for c in 0..2 {
                    h[a][c] += b.weight * bh[a][c];
                }
            }
        }
    }
    if q.dim == 1 {
        g[1] = 0.0;
        h = [[h[0][0], 0.0], [0.0, 0.0]];
    }
    (v, g, h)
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    format: String,
    version: u32,
    grid: Grid,
}

const FIELD_FORMAT: &str = "nlgames-field";

/// JSON header describing the grid of a serialized field.
pub fn field_header_json(field: &ScalarField) -> Result<String> {
    Ok(serde_json::to_string_pretty(&FieldHeader {
        format: FIELD_FORMAT.into(),
        version: 1,
        grid: field.grid.clone(),
    })?)
}

/// CSV body: index columns, coordinates, value.
pub fn field_to_csv(field: &ScalarField) -> Result<String> {
    let g = &field.grid;
    let mut w = csv::Writer::from_writer(Vec::new());
    if g.dim == 1 {
        w.write_record(["i", "x", "value"])?;
    } else {
        w.write_record(["i", "j", "x", "y", "value"])?;
    }
    for k in 0..g.len() {
        let (i, j) = g.ij(k);
        let p = g.coords(k);
        let v = field.values[k];
        if g.dim == 1 {
            w.write_record([i.to_string(), format!("{:.17e}", p[0]), format!("{v:.17e}")])?;
        } else {
            w.write_record([
                i.to_string(),
                j.to_string(),
                format!("{:.17e}", p[0]),
                format!("{:.17e}", p[1]),
                format!("{v:.17e}"),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

/// Parses the grid header alone.
pub fn grid_from_header(header_json: &str) -> Result<Grid> {
    let h: FieldHeader = serde_json::from_str(header_json)?;
    if h.format != FIELD_FORMAT || h.version != 1 {
        return Err(Error::Input(format!("unsupported field format {} v{}", h.format, h.version)));
    }
    let g = h.grid;
    let lo: Vec<f64> = g.lo[..g.dim.min(2)].to_vec();
    let hi: Vec<f64> = g.hi[..g.dim.min(2)].to_vec();
    let n: Vec<usize> = g.n[..g.dim.min(2)].to_vec();
    if g.dim == 0 || n.iter().any(|&k| k > 1 << 14) || n.iter().product::<usize>() > 1 << 24 {
        return Err(Error::Input("grid in header is empty or too large".into()));
    }
    Grid::new(&lo, &hi, &n)
}

/// Inverse of [`field_header_json`] + [`field_to_csv`]. Every node must appear
/// exactly once.
pub fn field_from_csv(header_json: &str, body: &str) -> Result<ScalarField> {
    let grid = grid_from_header(header_json)?;
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = vec![false; grid.len()];
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let want = if grid.dim == 1 { 3 } else { 5 };
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != want {
            return Err(Error::Input(format!("expected {want} columns, got {}", rec.len())));
        }
        let parse_idx = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Input(format!("bad index `{s}`: {e}")));
        let i = parse_idx(&rec[0])?;
        let j = if grid.dim == 2 { parse_idx(&rec[1])? } else { 0 };
        if i >= grid.n[0] || j >= grid.n[1] {
            return Err(Error::Input(format!("node ({i},{j}) outside grid")));
        }
        let v: f64 = rec[want - 1]
            .trim()
            .parse()
            .map_err(|e| Error::Input(format!("bad value `{}`: {e}", &rec[want - 1])))?;
        let k = grid.index(i, j);
        if seen[k] {
            return Err(Error::Input(format!("node ({i},{j}) listed twice")));
        }
        seen[k] = true;
        values[k] = v;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Input(format!("node {:?} missing", grid.ij(k))));
    }
    ScalarField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extrapolation_is_exact_for_affine_fields() {
        let g = Grid::square(-1.0, 1.0, 11).unwrap();
        let f = ScalarField::from_fn(&g, |x| 0.3 + 0.7 * x[0] - 0.2 * x[1]);
        for (i, j) in [(-3, 4), (14, -2), (-1, -1), (12, 12), (5, 5)] {
            let x = [-1.0 + 0.2 * i as f64, -1.0 + 0.2 * j as f64];
            assert!((f.at_extrapolated(i, j) - (0.3 + 0.7 * x[0] - 0.2 * x[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolate_examples() {
        let g = Grid::line(0.0, 1.0, 3).unwrap();
        let five = ScalarField::constant(&g, 5.0);
        assert_eq!(interpolate(&five, [0.37, 0.0]).unwrap(), 5.0);
        assert_eq!(interpolate(&five, [-12.0, 0.0]).unwrap(), 5.0);

        let lin = ScalarField::from_fn(&g, |p| p[0]);
        assert!((interpolate(&lin, [0.25, 0.0]).unwrap() - 0.25).abs() < 1e-15);

        let tent = ScalarField::new(g.clone(), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(interpolate(&tent, [1.7, 0.0]).unwrap(), 0.0);
        assert!(interpolate(&tent, [f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn eval_test_examples() {
        let (v, g, h) = eval_test(&QuadraticTest::zero(1), [0.3, 0.0]);
        assert_eq!((v, g, h), (0.0, ZERO2, ZERO22));

        let q = QuadraticTest::new(1, ZERO2, 1.0, [2.0, 0.0], ZERO22);
        let (v, g, h) = eval_test(&q, [0.5, 0.0]);
        assert_eq!(v, 2.0);
        assert_eq!(g[0], 2.0);
        assert_eq!(h[0][0], 0.0);

        let q = QuadraticTest::new(1, ZERO2, 0.0, ZERO2, [[2.0, 0.0], [0.0, 0.0]]);
        let (v, g, h) = eval_test(&q, [3.0, 0.0]);
        assert_eq!(v, 9.0);
        assert_eq!(g[0], 6.0);
        assert_eq!(h[0][0], 2.0);
    }

    #[test]
    fn partition_of_unity() {
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            let (a, da, dda) = pu_weight(s);
            let (b, db, ddb) = pu_weight(s - 1.0);
            assert!((a + b - 1.0).abs() < 1e-14);
            assert!((da + db).abs() < 1e-12);
            assert!((dda + ddb).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_interpolates_and_local_taylor_reproduces_quadratics() {
        let g = Grid::square(-1.0, 1.0, 11).unwrap();
        let f = Arc::new(ScalarField::from_fn(&g, |p| 0.3 + p[0] - 0.5 * p[1] + 0.7 * p[0] * p[0] + 0.2 * p[0] * p[1]));
        for kind in [Smoothing::Staircase, Smoothing::LocalTaylor] {
            let s = SmoothField::new(f.clone(), kind);
            for k in 0..g.len() {
                assert!((s.value(g.coords(k)) - f.values[k]).abs() < 1e-13);
            }
        }
        let s = SmoothField::new(f.clone(), Smoothing::LocalTaylor);
        let exact = |p: Point| 0.3 + p[0] - 0.5 * p[1] + 0.7 * p[0] * p[0] + 0.2 * p[0] * p[1];
        for p in [[0.13, -0.41], [0.55, 0.62], [-0.31, 0.07]] {
            assert!((s.value(p) - exact(p)).abs() < 1e-12);
            let gr = s.grad(p);
            assert!((gr[0] - (1.0 + 1.4 * p[0] + 0.2 * p[1])).abs() < 1e-11);
            assert!((gr[1] - (-0.5 + 0.2 * p[0])).abs() < 1e-11);
            let h = s.hess(p);
            assert!((h[0][0] - 1.4).abs() < 1e-9 && (h[0][1] - 0.2).abs() < 1e-9 && h[1][1].abs() < 1e-9);
        }
    }

    #[test]
    fn staircase_is_flat_at_nodes() {
        let g = Grid::line(0.0, 1.0, 6).unwrap();
        let f = Arc::new(ScalarField::from_fn(&g, |p| (3.0 * p[0]).sin()));
        let s = SmoothField::new(f, Smoothing::Staircase);
        for k in 0..g.len() {
            let x = g.coords(k);
            assert_eq!(s.grad(x)[0], 0.0);
            assert_eq!(s.hess(x)[0][0], 0.0);
        }
    }

    #[test]
    fn base_second_derivatives_are_bounded_across_cells() {
        let g = Grid::line(-1.0, 1.0, 21).unwrap();
        let f = Arc::new(ScalarField::from_fn(&g, |p| (2.0 * p[0]).cos()));
        let s = SmoothField::new(f, Smoothing::LocalTaylor);
        let interior = (0..400).map(|k| s.hess([-0.5 + k as f64 / 400.0, 0.0])[0][0].abs()).fold(0.0, f64::max);
        let mut prev = s.hess([-0.5, 0.0])[0][0];
        for k in 1..400 {
            let cur = s.hess([-0.5 + k as f64 / 400.0, 0.0])[0][0];
            assert!((cur - prev).abs() <= 10.0 * interior.max(1.0));
            prev = cur;
        }
    }

    #[test]
    fn field_roundtrip() {
        let g = Grid::new(&[-1.0, 0.0], &[1.0, 2.0], &[4, 3]).unwrap();
        let f = ScalarField::from_fn(&g, |p| p[0] * 0.1 + p[1].exp());
        let back = field_from_csv(&field_header_json(&f).unwrap(), &field_to_csv(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(Grid::line(0.0, 1.0, 2).is_err());
        assert!(Grid::line(1.0, 1.0, 5).is_err());
        assert!(Grid::new(&[0.0; 3], &[1.0; 3], &[3; 3]).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_reproduces_affine(a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
                                           x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let g = Grid::square(-1.0, 1.0, 7).unwrap();
            let f = ScalarField::from_fn(&g, |p| a + b * p[0] + c * p[1]);
            let v = interpolate(&f, [x, y]).unwrap();
            prop_assert!((v - (a + b * x + c * y)).abs() < 1e-12);
        }

        #[test]
        fn eval_test_derivatives_match_differences(c in -2.0..2.0f64, p0 in -2.0..2.0f64, p1 in -2.0..2.0f64,
                                                   g00 in -2.0..2.0f64, g01 in -2.0..2.0f64, g11 in -2.0..2.0f64,
                                                   w in -1.0..1.0f64, x in -0.8..0.8f64, y in -0.8..0.8f64) {
            let grid = Grid::square(-1.0, 1.0, 9).unwrap();
            let base = Arc::new(SmoothField::new(
                Arc::new(ScalarField::from_fn(&grid, |q| (q[0] + 0.5 * q[1]).sin())), Smoothing::LocalTaylor));
            let q = QuadraticTest::new(2, [0.1, -0.2], c, [p0, p1], [[g00, g01], [g01, g11]]).with_base(base, w);
            let hstep = 1e-4;
            let (_, gr, he) = eval_test(&q, [x, y]);
            for a in 0..2 {
                let mut zp = [x, y]; zp[a] += hstep;
                let mut zm = [x, y]; zm[a] -= hstep;
                let fd = (q.value(zp) - q.value(zm)) / (2.0 * hstep);
                prop_assert!((fd - gr[a]).abs() <= 1e-5 * (1.0 + gr[a].abs()));
                let gp = q.grad(zp); let gm = q.grad(zm);
                for b in 0..2 {
                    let fd2 = (gp[b] - gm[b]) / (2.0 * hstep);
                    prop_assert!((fd2 - he[a][b]).abs() <= 1e-5 * (1.0 + he[a][b].abs()));
                }
            }
        }
    }
}
