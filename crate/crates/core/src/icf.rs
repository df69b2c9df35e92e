//! The Paul/Carol game for the integral curvature flow `∂_t u = κ[x,u]|Du|`.
//!
//! One round from `(t, x)`: Paul picks an anchor `y ∈ B_ε(x)` and a
//! hypersurface through it, oriented so that `φ(y) ≥ φ(x)`. If `Dφ(y) ≠ 0`
//! and `κ*[y,φ] > 0`, Carol moves anywhere in `{z ∈ B_R(y) : φ(z) ≥ φ(y)}`
//! and time advances by `C_ε(ε/κ*)`; otherwise the game stays at `x` for
//! `ε²`. Then the roles swap with `κ_* < 0` and the sublevel side.
//!
//! Hypersurfaces come from a finite menu: spheres of a few radii through the
//! anchor with normals on a direction mesh (both orientations), and the level
//! sets of a fixed guide field (both orientations). Hyperplanes have zero
//! curvature, so they realize the stay branch, which is always available.
//! The menu does not depend on the values being propagated, which keeps the
//! step operators monotone and commuting with constants, and it is closed
//! under `φ ↦ −φ`, which gives the duality `R_ε[φ] = −R^ε[−φ]`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{kappa, kappa_lattice, CurvatureQuadrature, Kernel, Sphere};
use crate::cutoff::{icf_time_reset, CutoffParams, Side, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::{interpolate, norm, Grid, Point, ScalarField, Vec2};

/// Parameters of the hypersurface menu.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MenuConfig {
    /// Sphere normals per full turn (2D); the line uses the two directions.
    pub directions: usize,
    /// Sphere radii.
    pub radii: Vec<f64>,
    /// Offer the level sets of the guide field.
    pub guide: bool,
}

impl Default for MenuConfig {
    fn default() -> Self {
        MenuConfig {
            directions: 8,
            radii: vec![0.25, 0.5],
            guide: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcfConfig {
    pub cutoff: CutoffParams,
    pub grid: Grid,
    pub time: TimeGrid,
    pub menu: MenuConfig,
    /// Quadrature for the curvature of menu spheres.
    pub curvature: CurvatureQuadrature,
    /// Exclusion radius of the lattice curvature of the guide.
    pub guide_exclusion: f64,
}

impl IcfConfig {
    /// `dt = ε²/4`; menu spheres are analytic, so their curvature uses a tiny
    /// exclusion radius, while the lattice curvature of the guide excludes `2h`.
    pub fn standard(eps: f64, grid: Grid, t_final: f64, t_start: f64) -> Result<Self> {
        let h = grid.h[0];
        let cfg = IcfConfig {
            cutoff: CutoffParams::new(eps)?,
            time: TimeGrid::new(t_final, t_start, eps * eps / 4.0)?,
            grid,
            menu: MenuConfig::default(),
            curvature: CurvatureQuadrature::with_exclusion(1e-7),
            guide_exclusion: 2.0 * h,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eps(&self) -> f64 {
        self.cutoff.eps
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.eps();
        let h = if self.grid.dim == 2 { self.grid.h[0].max(self.grid.h[1]) } else { self.grid.h[0] };
        if h > eps / 2.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!("grid spacing {h} exceeds eps/2 = {}", eps / 2.0)));
        }
        if self.time.dt > eps * eps / 4.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!("dt = {} exceeds eps²/4 = {}", self.time.dt, eps * eps / 4.0)));
        }
        if self.menu.radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("menu radii must be positive, got {:?}", self.menu.radii)));
        }
        if self.grid.dim == 2 && self.menu.directions == 0 && !self.menu.radii.is_empty() {
            return Err(Error::Config("menu needs at least one direction".into()));
        }
        Ok(())
    }
}

/// A menu hypersurface through an anchor `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Shape {
    /// `sign·(ρ − |z − c|)` with `c = y − ρ·normal`: the sphere through `y`
    /// with outward normal `normal`.
    Sphere { normal: Vec2, radius: f64, sign: f64 },
    /// `sign·g` for the guide field `g`.
    Guide { sign: f64 },
}

/// A player's pick: anchor node and hypersurface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HypersurfaceChoice {
    pub anchor: usize,
    pub shape: Shape,
}

// Row runs (dj, di0, di1) relative to the anchor, or absolute (j, i0, i1).
type Run = (isize, isize, isize);

#[derive(Clone, Debug)]
struct MenuSphere {
    shape: Shape,
    kstar: f64,
    ksub: f64,
    /// `{φ ≥ φ(y)} ∩ B_R(y)` as relative runs.
    up: Vec<Run>,
    /// `{φ ≤ φ(y)} ∩ B_R(y)`.
    down: Vec<Run>,
    /// Per anchor offset `a` (x = y − a): `φ(x) ≤ φ(y)`.
    below: Vec<bool>,
    /// `φ(x) ≥ φ(y)`.
    above: Vec<bool>,
}

fn sphere_value(normal: Vec2, radius: f64, sign: f64, o: Vec2) -> f64 {
    sign * (radius - norm([o[0] + radius * normal[0], o[1] + radius * normal[1]]))
}

#[derive(Clone, Debug)]
struct GuideData {
    field: ScalarField,
    kappa: Vec<(f64, f64)>,
    grad_ok: Vec<bool>,
    up: Vec<Vec<Run>>,
    down: Vec<Vec<Run>>,
}

/// Menu, move tables and curvature values for one kernel, grid and guide.
#[derive(Clone, Debug)]
pub struct IcfGame {
    pub cfg: IcfConfig,
    pub kernel: Kernel,
    anchors: Vec<(isize, isize)>,
    spheres: Vec<MenuSphere>,
    guide: Option<GuideData>,
    stay_advance: usize,
}

/// What the value sources must answer: point values, and running extrema
/// over a region that may stop early once they cannot beat `bound`.
trait Source {
    fn at(&self, slot: usize, node: usize) -> f64;
    fn region_min(&self, slot: usize, rows: &[(usize, usize, usize)], bound: f64) -> f64;
    fn region_max(&self, slot: usize, rows: &[(usize, usize, usize)], bound: f64) -> f64;
}

struct FnSource<'a, F: Fn(usize, usize) -> f64> {
    f: F,
    grid: &'a Grid,
}

impl<F: Fn(usize, usize) -> f64> Source for FnSource<'_, F> {
    fn at(&self, slot: usize, node: usize) -> f64 {
        (self.f)(slot, node)
    }
    fn region_min(&self, slot: usize, rows: &[(usize, usize, usize)], bound: f64) -> f64 {
        let mut m = f64::INFINITY;
        for &(j, i0, i1) in rows {
            for i in i0..=i1 {
                m = m.min((self.f)(slot, self.grid.index(i, j)));
            }
            if m <= bound {
                break;
            }
        }
        m
    }
    fn region_max(&self, slot: usize, rows: &[(usize, usize, usize)], bound: f64) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for &(j, i0, i1) in rows {
            for i in i0..=i1 {
                m = m.max((self.f)(slot, self.grid.index(i, j)));
            }
            if m >= bound {
                break;
            }
        }
        m
    }
}

/// Sparse tables along each grid row.
#[derive(Clone, Debug)]
struct RowTable {
    n0: usize,
    levels: Vec<Vec<f64>>,
    is_min: bool,
}

impl RowTable {
    fn build(values: &[f64], n0: usize, is_min: bool) -> Self {
        let op = |a: f64, b: f64| if is_min { a.min(b) } else { a.max(b) };
        let mut levels = vec![values.to_vec()];
        let mut w = 1usize;
        while 2 * w <= n0 {
            let prev = levels.last().unwrap();
            let mut next = prev.clone();
            for row in next.chunks_mut(n0).zip(prev.chunks(n0)) {
                let (dst, src) = row;
                for i in 0..=n0 - 2 * w {
                    dst[i] = op(src[i], src[i + w]);
                }
            }
            levels.push(next);
            w *= 2;
        }
        RowTable { n0, levels, is_min }
    }

    #[inline]
    fn query(&self, j: usize, i0: usize, i1: usize) -> f64 {
        let len = i1 - i0 + 1;
        let l = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let lv = &self.levels[l];
        let (a, b) = (lv[j * self.n0 + i0], lv[j * self.n0 + i1 + 1 - (1 << l)]);
        if self.is_min {
            a.min(b)
        } else {
            a.max(b)
        }
    }
}

struct TableSource<'a> {
    values: &'a [Vec<f64>],
    tables: &'a [RowTable],
}

impl Source for TableSource<'_> {
    fn at(&self, slot: usize, node: usize) -> f64 {
        self.values[slot][node]
    }
    fn region_min(&self, slot: usize, rows: &[(usize, usize, usize)], bound: f64) -> f64 {
        let t = &self.tables[slot];
        let mut m = f64::INFINITY;
        for &(j, i0, i1) in rows {
            m = m.min(t.query(j, i0, i1));
            if m <= bound {
                break;
            }
        }
        m
    }
    fn region_max(&self, slot: usize, rows: &[(usize, usize, usize)], bound: f64) -> f64 {
        let t = &self.tables[slot];
        let mut m = f64::NEG_INFINITY;
        for &(j, i0, i1) in rows {
            m = m.max(t.query(j, i0, i1));
            if m >= bound {
                break;
            }
        }
        m
    }
}

/// Result of one step operator at a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepChoice {
    pub value: f64,
    /// `None` when the best option is to stay.
    pub choice: Option<HypersurfaceChoice>,
    /// Slot the game moves to.
    pub slot: usize,
}

fn relative_runs(grid: &Grid, r: f64, keep: impl Fn(Vec2) -> bool) -> Vec<Run> {
    let reach_i = (r / grid.h[0]).floor() as isize;
    let reach_j = if grid.dim == 2 { (r / grid.h[1]).floor() as isize } else { 0 };
    let mut runs = Vec::new();
    for dj in -reach_j..=reach_j {
        let mut open: Option<isize> = None;
        for di in -reach_i..=reach_i + 1 {
            let o = [di as f64 * grid.h[0], if grid.dim == 2 { dj as f64 * grid.h[1] } else { 0.0 }];
            let inside = di <= reach_i && norm(o) <= r * (1.0 + 1e-12) && keep(o);
            match (inside, open) {
                (true, None) => open = Some(di),
                (false, Some(s)) => {
                    runs.push((dj, s, di - 1));
                    open = None;
                }
                _ => {}
            }
        }
    }
    runs
}

fn guide_runs(g: &ScalarField, y: usize, r: f64, keep: impl Fn(f64, f64) -> bool) -> Vec<Run> {
    let grid = &g.grid;
    let (yi, yj) = grid.ij(y);
    let gy = g.values[y];
    let reach_i = (r / grid.h[0]).floor() as isize;
    let reach_j = if grid.dim == 2 { (r / grid.h[1]).floor() as isize } else { 0 };
    let mut runs = Vec::new();
    for dj in -reach_j..=reach_j {
        let j = yj as isize + dj;
        if j < 0 || j >= grid.n[1] as isize {
            continue;
        }
        let mut open: Option<isize> = None;
        let lo = (yi as isize - reach_i).max(0);
        let hi = (yi as isize + reach_i).min(grid.n[0] as isize - 1);
        for i in lo..=hi + 1 {
            let inside = i <= hi && {
                let o = [(i - yi as isize) as f64 * grid.h[0], if grid.dim == 2 { dj as f64 * grid.h[1] } else { 0.0 }];
                norm(o) <= r * (1.0 + 1e-12) && keep(g.values[grid.index(i as usize, j as usize)], gy)
            };
            match (inside, open) {
                (true, None) => open = Some(i),
                (false, Some(s)) => {
                    runs.push((j, s, i - 1));
                    open = None;
                }
                _ => {}
            }
        }
    }
    runs
}

fn guide_gradient(g: &ScalarField, k: usize) -> f64 {
    let grid = &g.grid;
    let (i, j) = grid.ij(k);
    let mut d = [0.0; 2];
    for a in 0..grid.dim {
        let (lo, hi) = if a == 0 {
            (if i > 0 { (i - 1, j) } else { (i, j) }, if i + 1 < grid.n[0] { (i + 1, j) } else { (i, j) })
        } else {
            (if j > 0 { (i, j - 1) } else { (i, j) }, if j + 1 < grid.n[1] { (i, j + 1) } else { (i, j) })
        };
        let span = if a == 0 { (hi.0 - lo.0) as f64 } else { (hi.1 - lo.1) as f64 } * grid.h[a];
        d[a] = (g.values[grid.index(hi.0, hi.1)] - g.values[grid.index(lo.0, lo.1)]) / span;
    }
    norm(d)
}

impl IcfGame {
    /// Builds the menu; `guide` must live on the configured grid and stays
    /// fixed for every step.
    pub fn new(kernel: Kernel, cfg: IcfConfig, guide: &ScalarField) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid.clone();
        if kernel.dim != grid.dim {
            return Err(Error::Config(format!("kernel dimension {} does not match grid dimension {}", kernel.dim, grid.dim)));
        }
        if guide.grid != grid {
            return Err(Error::Input("guide field must live on the game grid".into()));
        }
        let eps = cfg.eps();
        let big_r = kernel.support_r;
        let anchors = offsets_within(&grid, eps);

        let normals: Vec<Vec2> = if grid.dim == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..cfg.menu.directions)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / cfg.menu.directions as f64;
                    [th.cos(), th.sin()]
                })
                .collect()
        };
        let mut spheres = Vec::new();
        for &radius in &cfg.menu.radii {
            let ball = kappa([0.0, 0.0], &Sphere { center: [-radius, 0.0], radius }, &kernel, &cfg.curvature);
            let (bs, bb) = snap_pair(ball.kappa_star, ball.kappa_sub);
            for &normal in &normals {
                for sign in [1.0, -1.0] {
                    let (kstar, ksub) = if sign > 0.0 {
                        (bs, bb)
                    } else {
                        (-bb, -bs)
                    };
                    let at = |o: Vec2| sphere_value(normal, radius, sign, o);
                    let fy = at([0.0, 0.0]);
                    let up = relative_runs(&grid, big_r, |o| at(o) >= fy);
                    let down = relative_runs(&grid, big_r, |o| at(o) <= fy);
                    let off = |a: &(isize, isize)| [-(a.0 as f64) * grid.h[0], -(a.1 as f64) * grid.h[1]];
                    let below = anchors.iter().map(|a| at(off(a)) <= fy).collect();
                    let above = anchors.iter().map(|a| at(off(a)) >= fy).collect();
                    spheres.push(MenuSphere {
                        shape: Shape::Sphere { normal, radius, sign },
                        kstar,
                        ksub,
                        up,
                        down,
                        below,
                        above,
                    });
                }
            }
        }

        let guide = if cfg.menu.guide {
            let kap = kappa_lattice(guide, &kernel, cfg.guide_exclusion).into_iter().map(|(a, b)| snap_pair(a, b)).collect();
            let diam = (0..grid.dim).map(|a| (grid.hi[a] - grid.lo[a]).powi(2)).sum::<f64>().sqrt();
            let scale = (guide.max() - guide.min()) / diam;
            let grad_ok = (0..grid.len()).map(|k| guide_gradient(guide, k) > 1e-8 * scale && scale > 0.0).collect();
            let up = (0..grid.len()).into_par_iter().map(|y| guide_runs(guide, y, big_r, |v, gy| v >= gy)).collect();
            let down = (0..grid.len()).into_par_iter().map(|y| guide_runs(guide, y, big_r, |v, gy| v <= gy)).collect();
            Some(GuideData {
                field: guide.clone(),
                kappa: kap,
                grad_ok,
                up,
                down,
            })
        } else {
            None
        };
        let stay_advance = cfg.time.advance(cfg.cutoff.stay());
        Ok(IcfGame {
            cfg,
            kernel,
            anchors,
            spheres,
            guide,
            stay_advance,
        })
    }

    /// Menu spheres as `(shape, κ*, κ_*)`.
    pub fn menu(&self) -> Vec<(Shape, f64, f64)> {
        self.spheres.iter().map(|s| (s.shape, s.kstar, s.ksub)).collect()
    }

    fn grid(&self) -> &Grid {
        &self.cfg.grid
    }

    fn anchor_node(&self, x: usize, a: (isize, isize)) -> Option<usize> {
        let g = self.grid();
        let (i, j) = g.ij(x);
        let (yi, yj) = (i as isize + a.0, j as isize + a.1);
        if yi < 0 || yj < 0 || yi >= g.n[0] as isize || yj >= g.n[1] as isize {
            return None;
        }
        Some(g.index(yi as usize, yj as usize))
    }

    fn clip(&self, y: usize, runs: &[Run], out: &mut Vec<(usize, usize, usize)>) {
        let g = self.grid();
        let (yi, yj) = g.ij(y);
        out.clear();
        for &(dj, a, b) in runs {
            let j = yj as isize + dj;
            if j < 0 || j >= g.n[1] as isize {
                continue;
            }
            let lo = (yi as isize + a).max(0);
            let hi = (yi as isize + b).min(g.n[0] as isize - 1);
            if lo <= hi {
                out.push((j as usize, lo as usize, hi as usize));
            }
        }
    }

    fn absolute(runs: &[Run], out: &mut Vec<(usize, usize, usize)>) {
        out.clear();
        out.extend(runs.iter().map(|&(j, a, b)| (j as usize, a as usize, b as usize)));
    }

    /// Curvature pair `(κ*, κ_*)` of a choice at its anchor.
    pub fn choice_kappa(&self, c: &HypersurfaceChoice) -> (f64, f64) {
        match c.shape {
            Shape::Sphere { .. } => {
                let s = self.spheres.iter().find(|s| s.shape == c.shape).expect("menu sphere");
                (s.kstar, s.ksub)
            }
            Shape::Guide { sign } => {
                let (ks, kb) = self.guide.as_ref().expect("guide").kappa[c.anchor];
                if sign > 0.0 {
                    (ks, kb)
                } else {
                    (-kb, -ks)
                }
            }
        }
    }

    /// Value of the choice's function at node `z`.
    pub fn choice_value(&self, c: &HypersurfaceChoice, z: usize) -> f64 {
        let g = self.grid();
        match c.shape {
            Shape::Sphere { normal, radius, sign } => {
                let (zi, zj) = g.ij(z);
                let (yi, yj) = g.ij(c.anchor);
                let o = [
                    (zi as isize - yi as isize) as f64 * g.h[0],
                    if g.dim == 2 { (zj as isize - yj as isize) as f64 * g.h[1] } else { 0.0 },
                ];
                sphere_value(normal, radius, sign, o)
            }
            Shape::Guide { sign } => sign * self.guide.as_ref().expect("guide").field.values[z],
        }
    }

    /// `𝒫±(x, y, φ)` as node indices, with whether the branch is active.
    pub fn halfspace_set(&self, side: Side, x: usize, c: &HypersurfaceChoice) -> (Vec<usize>, bool) {
        let (ks, kb) = self.choice_kappa(c);
        let grad_ok = match c.shape {
            Shape::Sphere { .. } => true,
            Shape::Guide { .. } => self.guide.as_ref().map(|g| g.grad_ok[c.anchor]).unwrap_or(false),
        };
        let active = grad_ok
            && match side {
                Side::Paul => ks > 0.0,
                Side::Carol => kb < 0.0,
            };
        if !active {
            return (vec![x], false);
        }
        let fy = self.choice_value(c, c.anchor);
        let g = self.grid();
        let y = g.coords(c.anchor);
        let nodes = g
            .nodes_within(y, self.kernel.support_r * (1.0 + 1e-12))
            .into_iter()
            .filter(|&z| {
                let fz = self.choice_value(c, z);
                match side {
                    Side::Paul => fz >= fy,
                    Side::Carol => fz <= fy,
                }
            })
            .collect();
        (nodes, true)
    }

    fn step_with(&self, side: Side, src: &dyn Source, slot: usize, x: usize) -> StepChoice {
        let paul = side == Side::Paul;
        let stay_slot = slot.saturating_sub(self.stay_advance);
        let mut best = StepChoice {
            value: src.at(stay_slot, x),
            choice: None,
            slot: stay_slot,
        };
        let better = |v: f64, b: f64| if paul { v > b } else { v < b };
        let mut rows = Vec::new();
        let consider = |best: &mut StepChoice, kappa: f64, rows: &[(usize, usize, usize)], choice: HypersurfaceChoice| {
            let reset = icf_time_reset(&self.cfg.cutoff, side, true, kappa);
            let target = slot.saturating_sub(self.cfg.time.advance(reset));
            let v = if paul {
                src.region_min(target, rows, best.value)
            } else {
                src.region_max(target, rows, best.value)
            };
            if better(v, best.value) {
                *best = StepChoice {
                    value: v,
                    choice: Some(choice),
                    slot: target,
                };
            }
        };
        for (ai, &a) in self.anchors.iter().enumerate() {
            let Some(y) = self.anchor_node(x, a) else { continue };
            if let Some(gd) = &self.guide {
                if gd.grad_ok[y] {
                    let (gx, gy) = (gd.field.values[x], gd.field.values[y]);
                    let (ks, kb) = gd.kappa[y];
                    for sign in [1.0, -1.0] {
                        // κ* and κ_* of sign·g
                        let (s_star, s_sub) = if sign > 0.0 { (ks, kb) } else { (-kb, -ks) };
                        let (active, admissible, kap) = if paul {
                            (s_star > 0.0, sign * gx <= sign * gy, s_star)
                        } else {
                            (s_sub < 0.0, sign * gx >= sign * gy, s_sub)
                        };
                        if !(active && admissible) {
                            continue;
                        }
                        // superlevel side of sign·g for Paul, sublevel for Carol
                        let up_side = (sign > 0.0) == paul;
                        Self::absolute(if up_side { &gd.up[y] } else { &gd.down[y] }, &mut rows);
                        consider(&mut best, kap, &rows, HypersurfaceChoice { anchor: y, shape: Shape::Guide { sign } });
                    }
                }
            }
            for s in &self.spheres {
                let (active, admissible, kap, runs) = if paul {
                    (s.kstar > 0.0, s.below[ai], s.kstar, &s.up)
                } else {
                    (s.ksub < 0.0, s.above[ai], s.ksub, &s.down)
                };
                if !(active && admissible) {
                    continue;
                }
                self.clip(y, runs, &mut rows);
                consider(&mut best, kap, &rows, HypersurfaceChoice { anchor: y, shape: s.shape });
            }
        }
        best
    }

    /// `R^ε[φ]` at (slot, node) for `φ(slot', node')`.
    pub fn paul_step(&self, phi: impl Fn(usize, usize) -> f64, slot: usize, x: usize) -> StepChoice {
        let src = FnSource { f: phi, grid: self.grid() };
        self.step_with(Side::Paul, &src, slot, x)
    }

    /// `R_ε[φ]` at (slot, node).
    pub fn carol_step(&self, phi: impl Fn(usize, usize) -> f64, slot: usize, x: usize) -> StepChoice {
        let src = FnSource { f: phi, grid: self.grid() };
        self.step_with(Side::Carol, &src, slot, x)
    }

    /// One full round `R^ε[R_ε[φ]]` at (slot, node).
    pub fn game_step(&self, phi: &(dyn Fn(usize, usize) -> f64 + Sync), slot: usize, x: usize) -> f64 {
        let inner = |s: usize, z: usize| self.carol_step(phi, s, z).value;
        self.paul_step(inner, slot, x).value
    }

    /// Backward induction from `u_T`; every slot of the time grid is filled.
    pub fn solve(&self, u_t: &ScalarField) -> Result<IcfSolution> {
        let g = self.grid();
        if &u_t.grid != g {
            return Err(Error::Input("terminal data must live on the game grid".into()));
        }
        let n0 = g.n[0];
        let slots = self.cfg.time.slots;
        let mut u: Vec<Vec<f64>> = vec![u_t.values.clone()];
        let mut u_max = vec![RowTable::build(&u_t.values, n0, false)];
        let mut inner: Vec<Vec<f64>> = Vec::with_capacity(slots + 1);
        let mut inner_min: Vec<RowTable> = Vec::with_capacity(slots + 1);
        let carol_row = |u: &[Vec<f64>], u_max: &[RowTable], slot: usize| -> Vec<f64> {
            let src = TableSource { values: u, tables: u_max };
            (0..g.len()).into_par_iter().map(|x| self.step_with(Side::Carol, &src, slot, x).value).collect()
        };
        let first = carol_row(&u, &u_max, 0);
        inner_min.push(RowTable::build(&first, n0, true));
        inner.push(first);
        for slot in 1..=slots {
            let next: Vec<f64> = {
                let src = TableSource {
                    values: &inner,
                    tables: &inner_min,
                };
                (0..g.len()).into_par_iter().map(|x| self.step_with(Side::Paul, &src, slot, x).value).collect()
            };
            u_max.push(RowTable::build(&next, n0, false));
            u.push(next);
            let next_inner = carol_row(&u, &u_max, slot);
            inner_min.push(RowTable::build(&next_inner, n0, true));
            inner.push(next_inner);
        }
        Ok(IcfSolution {
            grid: g.clone(),
            time: self.cfg.time,
            u,
            inner,
        })
    }

    /// Replays optimal play from (slot, node) until time passes T, logging
    /// every branch where the chosen hypersurface was active.
    pub fn play(&self, sol: &IcfSolution, slot: usize, node: usize) -> Vec<LoggedMove> {
        let mut log = Vec::new();
        let (mut s, mut x) = (slot, node);
        let g = self.grid();
        while s > 0 {
            for side in [Side::Paul, Side::Carol] {
                let values: &[Vec<f64>] = if side == Side::Paul { &sol.inner } else { &sol.u };
                let step = self.step_with(
                    side,
                    &FnSource {
                        f: |k: usize, z: usize| values[k][z],
                        grid: g,
                    },
                    s,
                    x,
                );
                let Some(c) = step.choice else {
                    s = step.slot;
                    continue;
                };
                let (nodes, active) = self.halfspace_set(side, x, &c);
                debug_assert!(active);
                let mut arg = nodes[0];
                for &z in &nodes {
                    let (vz, va) = (values[step.slot][z], values[step.slot][arg]);
                    if (side == Side::Paul && vz < va) || (side == Side::Carol && vz > va) {
                        arg = z;
                    }
                }
                log.push(LoggedMove {
                    side,
                    slot: s,
                    from: x,
                    choice: c,
                    to: arg,
                    phi_from: self.choice_value(&c, x),
                    phi_anchor: self.choice_value(&c, c.anchor),
                    phi_to: self.choice_value(&c, arg),
                });
                s = step.slot;
                x = arg;
            }
        }
        log
    }
}

/// Curvature sums of balanced sets cancel only up to rounding; treat those
/// as flat so that round-off cannot open an active branch.
fn snap_pair(star: f64, sub: f64) -> (f64, f64) {
    let floor = 1e-12 * (1.0 + star.abs().max(sub.abs()));
    let snap = |v: f64| if v.abs() <= floor { 0.0 } else { v };
    (snap(star), snap(sub))
}

fn offsets_within(grid: &Grid, r: f64) -> Vec<(isize, isize)> {
    let ri = (r / grid.h[0] + 1e-9).floor() as isize;
    let rj = if grid.dim == 2 { (r / grid.h[1] + 1e-9).floor() as isize } else { 0 };
    let mut out = Vec::new();
    for dj in -rj..=rj {
        for di in -ri..=ri {
            let o = [di as f64 * grid.h[0], if grid.dim == 2 { dj as f64 * grid.h[1] } else { 0.0 }];
            if norm(o) <= r * (1.0 + 1e-9) {
                out.push((di, dj));
            }
        }
    }
    out
}

/// One active move of a replayed game.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LoggedMove {
    pub side: Side,
    pub slot: usize,
    pub from: usize,
    pub choice: HypersurfaceChoice,
    pub to: usize,
    pub phi_from: f64,
    pub phi_anchor: f64,
    pub phi_to: f64,
}

impl LoggedMove {
    /// Paul's function never decreases along his branch, Carol's never
    /// increases along hers.
    pub fn chain_holds(&self) -> bool {
        match self.side {
            Side::Paul => self.phi_from <= self.phi_anchor && self.phi_anchor <= self.phi_to,
            Side::Carol => self.phi_from >= self.phi_anchor && self.phi_anchor >= self.phi_to,
        }
    }
}

/// Memoized value function; `u[k]` is time `T − k·dt`, `inner[k]` is
/// `R_ε[u]` at that slot.
#[derive(Clone, Debug)]
pub struct IcfSolution {
    pub grid: Grid,
    pub time: TimeGrid,
    pub u: Vec<Vec<f64>>,
    pub inner: Vec<Vec<f64>>,
}

impl IcfSolution {
    pub fn slice(&self, slot: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.u[slot].clone(),
        }
    }

    pub fn at_time(&self, t: f64) -> ScalarField {
        self.slice(self.time.slot_of(t))
    }
}

/// Mean distance from `center` to the zero level set of the bilinear
/// interpolant along `rays` directions, searching outward from a positive
/// center value. `None` if some ray never changes sign inside the box.
pub fn zero_level_radius(u: &ScalarField, center: Point, rays: usize) -> Option<f64> {
    let g = &u.grid;
    let f = |p: Point| interpolate(u, p).unwrap_or(f64::NAN);
    if !(f(center) > 0.0) {
        return None;
    }
    let step = 0.25 * g.h[0];
    let mut total = 0.0;
    let n = if g.dim == 1 { 2 } else { rays.max(1) };
    for k in 0..n {
        let th = 2.0 * PI * k as f64 / n as f64;
        let d = if g.dim == 1 { [if k == 0 { 1.0 } else { -1.0 }, 0.0] } else { [th.cos(), th.sin()] };
        let at = |r: f64| [center[0] + r * d[0], center[1] + r * d[1]];
        let mut r = 0.0;
        let found = loop {
            let next = r + step;
            if !g.contains(at(next)) {
                break None;
            }
            if f(at(next)) <= 0.0 {
                break Some((r, next));
            }
            r = next;
        };
        let (mut lo, mut hi) = found?;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f(at(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        total += 0.5 * (lo + hi);
    }
    Some(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (IcfGame, ScalarField) {
        let grid = Grid::line(-1.0, 1.0, 21).unwrap();
        let cfg = IcfConfig::standard(0.2, grid.clone(), 1.0, 0.8).unwrap();
        let k = Kernel::power(1, 0.5, 0.5).unwrap();
        let guide = ScalarField::from_fn(&grid, |x| (2.0 * x[0]).sin() + 0.3 * x[0] * x[0]);
        (IcfGame::new(k, cfg, &guide).unwrap(), guide)
    }

    fn random_slices(grid: &Grid, slots: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..=slots).map(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn constants_pass_through() {
        let (game, _) = toy();
        for x in 0..21 {
            assert_eq!(game.game_step(&|_, _| 0.7, 30, x), 0.7);
        }
    }

    #[test]
    fn menu_has_both_orientations() {
        let grid = Grid::square(-1.0, 1.0, 21).unwrap();
        let cfg = IcfConfig::standard(0.2, grid.clone(), 1.0, 0.8).unwrap();
        let game = IcfGame::new(Kernel::power(2, 0.5, 0.5).unwrap(), cfg, &ScalarField::constant(&grid, 0.0)).unwrap();
        let m = game.menu();
        assert!(m.iter().any(|(_, ks, _)| *ks > 0.0));
        assert!(m.iter().any(|(_, _, kb)| *kb < 0.0));
        for (s, ks, kb) in &m {
            assert!(kb <= ks, "{s:?}");
        }
        // on a line a ball through the anchor is balanced against its complement
        let (line, _) = toy();
        assert!(line.menu().iter().all(|(_, ks, kb)| *ks == 0.0 && *kb == 0.0));
    }

    #[test]
    fn halfspace_examples() {
        let grid = Grid::square(-1.0, 1.0, 21).unwrap();
        let cfg = IcfConfig::standard(0.2, grid.clone(), 1.0, 0.8).unwrap();
        let guide = ScalarField::from_fn(&grid, |x| 0.4 - norm(x));
        let game = IcfGame::new(Kernel::power(2, 0.5, 0.5).unwrap(), cfg, &guide).unwrap();
        let x = 220;
        // a sphere whose superlevel side is the small ball: κ* < 0, inactive for Paul
        let (ball, _, _) = game.menu().into_iter().find(|(s, ks, _)| matches!(s, Shape::Sphere { sign, .. } if *sign > 0.0) && *ks < 0.0).unwrap();
        let c = HypersurfaceChoice { anchor: 221, shape: ball };
        assert_eq!(game.halfspace_set(Side::Paul, x, &c), (vec![x], false));
        let (nodes, active) = game.halfspace_set(Side::Carol, x, &c);
        assert!(active && nodes.contains(&221));
        let fy = game.choice_value(&c, 221);
        assert!(nodes.iter().all(|&z| game.choice_value(&c, z) <= fy));
        // flat guide → inactive
        let flat = ScalarField::constant(&guide.grid, 1.0);
        let g2 = IcfGame::new(game.kernel, game.cfg.clone(), &flat).unwrap();
        let c = HypersurfaceChoice { anchor: 221, shape: Shape::Guide { sign: 1.0 } };
        assert_eq!(g2.halfspace_set(Side::Paul, x, &c), (vec![x], false));
    }

    #[test]
    fn affine_guide_is_inactive() {
        let grid = Grid::line(-1.0, 1.0, 21).unwrap();
        let cfg = IcfConfig::standard(0.2, grid.clone(), 1.0, 0.8).unwrap();
        let k = Kernel::power(1, 0.5, 0.5).unwrap();
        let guide = ScalarField::from_fn(&grid, |x| 0.3 + 0.7 * x[0]);
        let mut cfg2 = cfg.clone();
        cfg2.menu.radii.clear();
        let game = IcfGame::new(k, cfg2, &guide).unwrap();
        // away from the boundary the lattice curvature of a line is zero
        for y in 6..15 {
            let c = HypersurfaceChoice { anchor: y, shape: Shape::Guide { sign: 1.0 } };
            assert!(!game.halfspace_set(Side::Paul, 10, &c).1);
        }
        let st = game.paul_step(|s, z| (s * 100 + z) as f64, 40, 10);
        assert_eq!(st.choice, None);
        assert_eq!(st.value, (36 * 100 + 10) as f64);
    }

    #[test]
    fn fast_solver_matches_generic_operators() {
        let (game, guide) = toy();
        let sol = game.solve(&guide).unwrap();
        for slot in [1, 5, game.cfg.time.slots] {
            for x in 0..21 {
                let v = game.paul_step(|s, z| sol.inner[s][z], slot, x).value;
                assert_eq!(v, sol.u[slot][x]);
                let w = game.carol_step(|s, z| sol.u[s][z], slot, x).value;
                assert_eq!(w, sol.inner[slot][x]);
            }
        }
        let (lo, hi) = (guide.min(), guide.max());
        assert!(sol.u.iter().flatten().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn logged_plays_keep_the_score_chain() {
        let (game, guide) = toy();
        let sol = game.solve(&guide).unwrap();
        let mut active = 0;
        for x in 0..21 {
            for m in game.play(&sol, game.cfg.time.slots, x) {
                assert!(m.chain_holds(), "{m:?}");
                active += 1;
            }
        }
        assert!(active > 0);
    }

    #[test]
    fn level_radius_of_a_cone() {
        let g = Grid::square(-1.0, 1.0, 41).unwrap();
        let u = ScalarField::from_fn(&g, |x| 0.5 - norm(x));
        let r = zero_level_radius(&u, [0.0, 0.0], 16).unwrap();
        assert!((r - 0.5).abs() < 0.01, "{r}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn duality_monotone_commutes(seed in 0u64..10_000, c in -3.0..3.0f64, slot in 1usize..25) {
            let (game, _) = toy();
            let a = random_slices(&game.cfg.grid, slot, seed);
            let bump = random_slices(&game.cfg.grid, slot, seed + 1);
            for x in 0..21 {
                let carol = game.carol_step(|s, z| a[s][z], slot, x).value;
                let paul_neg = game.paul_step(|s, z| -a[s][z], slot, x).value;
                prop_assert_eq!(carol, -paul_neg);
                let base = game.game_step(&|s, z| a[s][z], slot, x);
                prop_assert_eq!(game.game_step(&|s, z| a[s][z] + c, slot, x), base + c);
                prop_assert!(game.game_step(&|s, z| a[s][z] + bump[s][z].abs(), slot, x) >= base);
            }
        }
    }
}
