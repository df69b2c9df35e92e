//! The Paul/Carol game for the eikonal equation `∂_t u + v(x)|Du| = 0` with a
//! speed of either sign.
//!
//! Paul moves inside `B_ε(x) ∩ {v > 0}`, Carol inside `B_ε(x_P) ∩ {v < 0}`;
//! each move resets time by the clamped travel time `C_ε(ε / |v|)` at the
//! destination, a forced stay costs `ε²`. Times are rounded down to a micro
//! grid and the value is memoized on (slot, node).

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cutoff::{eikonal_time_reset, CutoffParams, Side, TimeGrid};
use crate::error::{Error, Result};
use crate::fields::{dist, Grid, Point, ScalarField};

pub type SpeedFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Lipschitz speed `v(x)` with a declared Lipschitz constant.
#[derive(Clone)]
pub struct SpeedField {
    pub name: String,
    pub v: SpeedFn,
    pub lipschitz: f64,
}

impl fmt::Debug for SpeedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpeedField({}, L={})", self.name, self.lipschitz)
    }
}

impl SpeedField {
    pub fn constant(c: f64) -> Self {
        SpeedField {
            name: format!("const({c})"),
            v: Arc::new(move |_| c),
            lipschitz: 0.0,
        }
    }

    /// `v(x) = x₁`.
    pub fn linear() -> Self {
        SpeedField {
            name: "linear".into(),
            v: Arc::new(|x| x[0]),
            lipschitz: 1.0,
        }
    }

    /// `+1` for `x₁ ≤ −w`, `−1` for `x₁ ≥ w`, linear in between.
    pub fn two_zone(w: f64) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("two_zone ramp half-width must be positive, got {w}")));
        }
        Ok(SpeedField {
            name: format!("two_zone({w})"),
            v: Arc::new(move |x| (-x[0] / w).clamp(-1.0, 1.0)),
            lipschitz: 1.0 / w,
        })
    }

    #[inline]
    pub fn at(&self, x: Point) -> f64 {
        (self.v)(x)
    }

    /// `−v`, used by the duality identity.
    pub fn negated(&self) -> Self {
        let v = self.v.clone();
        SpeedField {
            name: format!("-{}", self.name),
            v: Arc::new(move |x| -v(x)),
            lipschitz: self.lipschitz,
        }
    }

    /// Samples random pairs in the grid box; returns the first pair violating
    /// the declared Lipschitz bound.
    pub fn spot_check_lipschitz(&self, grid: &Grid, pairs: usize, rng: &mut impl Rng) -> Option<(Point, Point)> {
        let draw = |rng: &mut dyn rand::RngCore| -> Point {
            let mut p = [0.0; 2];
            for a in 0..grid.dim {
                p[a] = rng.gen_range(grid.lo[a]..=grid.hi[a]);
            }
            p
        };
        for _ in 0..pairs {
            let (x, y) = (draw(rng), draw(rng));
            if (self.at(x) - self.at(y)).abs() > self.lipschitz * dist(x, y) * (1.0 + 1e-12) + 1e-14 {
                return Some((x, y));
            }
        }
        None
    }
}

/// Nodes a player may move to, or the current node when the player must stay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoveSet {
    pub nodes: Vec<usize>,
    pub moved: bool,
}

/// `E⁺(x)` (Paul) or `E⁻(x)` (Carol) over the nodes of the closed ball
/// `B_ε(x)`; the sign of `v` is tested strictly.
pub fn move_set(grid: &Grid, x_node: usize, v: &SpeedField, eps: f64, side: Side) -> MoveSet {
    let x = grid.coords(x_node);
    let nodes: Vec<usize> = grid
        .nodes_within(x, eps)
        .into_iter()
        .filter(|&k| {
            let s = v.at(grid.coords(k));
            match side {
                Side::Paul => s > 0.0,
                Side::Carol => s < 0.0,
            }
        })
        .collect();
    if nodes.is_empty() {
        MoveSet {
            nodes: vec![x_node],
            moved: false,
        }
    } else {
        MoveSet { nodes, moved: true }
    }
}

pub fn move_set_plus(grid: &Grid, x_node: usize, v: &SpeedField, eps: f64) -> MoveSet {
    move_set(grid, x_node, v, eps, Side::Paul)
}

pub fn move_set_minus(grid: &Grid, x_node: usize, v: &SpeedField, eps: f64) -> MoveSet {
    move_set(grid, x_node, v, eps, Side::Carol)
}

#[derive(Clone, Debug)]
pub struct EikonalConfig {
    pub cutoff: CutoffParams,
    pub grid: Grid,
    pub time: TimeGrid,
}

impl EikonalConfig {
    /// Spacing `h = ε/4` on `[lo, hi]^dim` and `dt = ε²/4` over `[t_start, T]`.
    pub fn standard(eps: f64, dim: usize, lo: f64, hi: f64, t_final: f64, t_start: f64) -> Result<Self> {
        let cutoff = CutoffParams::new(eps)?;
        let grid = Grid::with_spacing(dim, lo, hi, eps / 4.0)?;
        let time = TimeGrid::new(t_final, t_start, eps * eps / 4.0)?;
        let cfg = EikonalConfig { cutoff, grid, time };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eps(&self) -> f64 {
        self.cutoff.eps
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.eps();
        let h = if self.grid.dim == 2 { self.grid.h[0].max(self.grid.h[1]) } else { self.grid.h[0] };
        if h > eps / 4.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!("grid spacing {h} exceeds eps/4 = {}", eps / 4.0)));
        }
        if self.time.dt > eps * eps / 4.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!("dt = {} exceeds eps²/4 = {}", self.time.dt, eps * eps / 4.0)));
        }
        Ok(())
    }
}

/// A move with the number of micro slots it consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Move {
    pub to: usize,
    pub advance: usize,
}

/// Best reply found by a step operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Choice {
    pub value: f64,
    pub to: usize,
    /// Slot reached after the move (0 means at or past T).
    pub slot: usize,
    /// Micro slots consumed by the move.
    pub advance: usize,
}

/// Move tables for both players on a fixed grid and speed.
#[derive(Clone, Debug)]
pub struct EikonalGame {
    pub cfg: EikonalConfig,
    pub speed: SpeedField,
    paul: Vec<Vec<Move>>,
    carol: Vec<Vec<Move>>,
}

fn move_table(cfg: &EikonalConfig, v: &SpeedField, side: Side) -> Result<Vec<Vec<Move>>> {
    let g = &cfg.grid;
    let eps = cfg.eps();
    (0..g.len())
        .map(|k| {
            let ms = move_set(g, k, v, eps, side);
            ms.nodes
                .iter()
                .map(|&to| {
                    let reset = eikonal_time_reset(&cfg.cutoff, ms.moved, v.at(g.coords(to)).abs())?;
                    Ok(Move {
                        to,
                        advance: cfg.time.advance(reset),
                    })
                })
                .collect()
        })
        .collect()
}

impl EikonalGame {
    pub fn new(speed: SpeedField, cfg: EikonalConfig) -> Result<Self> {
        cfg.validate()?;
        let paul = move_table(&cfg, &speed, Side::Paul)?;
        let carol = move_table(&cfg, &speed, Side::Carol)?;
        Ok(EikonalGame { cfg, speed, paul, carol })
    }

    pub fn moves(&self, side: Side, node: usize) -> &[Move] {
        match side {
            Side::Paul => &self.paul[node],
            Side::Carol => &self.carol[node],
        }
    }

    /// `R^ε[φ]` at (slot, node): Paul's best move against `φ(slot', node')`.
    /// Ties go to the first move in node order.
    pub fn paul_step(&self, phi: impl Fn(usize, usize) -> f64, slot: usize, node: usize) -> Choice {
        let mut best = Choice {
            value: f64::NEG_INFINITY,
            to: node,
            slot,
            advance: 0,
        };
        for m in &self.paul[node] {
            let s = slot.saturating_sub(m.advance);
            let val = phi(s, m.to);
            if val > best.value {
                best = Choice {
                    value: val,
                    to: m.to,
                    slot: s,
                    advance: m.advance,
                };
            }
        }
        best
    }

    /// `R_ε[φ]` at (slot, node): Carol's best move.
    pub fn carol_step(&self, phi: impl Fn(usize, usize) -> f64, slot: usize, node: usize) -> Choice {
        let mut best = Choice {
            value: f64::INFINITY,
            to: node,
            slot,
            advance: 0,
        };
        for m in &self.carol[node] {
            let s = slot.saturating_sub(m.advance);
            let val = phi(s, m.to);
            if val < best.value {
                best = Choice {
                    value: val,
                    to: m.to,
                    slot: s,
                    advance: m.advance,
                };
            }
        }
        best
    }

    /// Backward induction from `u_T`; every slot of the time grid is filled.
    pub fn solve(&self, u_t: &ScalarField) -> Result<EikonalSolution> {
        let g = &self.cfg.grid;
        if &u_t.grid != g {
            return Err(Error::Input("terminal data must live on the game grid".into()));
        }
        let slots = self.cfg.time.slots;
        let mut u: Vec<Vec<f64>> = Vec::with_capacity(slots + 1);
        let mut inner: Vec<Vec<f64>> = Vec::with_capacity(slots + 1);
        u.push(u_t.values.clone());
        // Carol still moves when Paul's reset lands at or past T.
        let first: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|k| self.carol_step(|_, y| u_t.values[y], 0, k).value)
            .collect();
        inner.push(first);
        for slot in 1..=slots {
            let next: Vec<f64> = (0..g.len())
                .into_par_iter()
                .map(|k| self.paul_step(|s, y| inner[s][y], slot, k).value)
                .collect();
            u.push(next);
            let next_inner: Vec<f64> = (0..g.len())
                .into_par_iter()
                .map(|k| self.carol_step(|s, y| u[s][y], slot, k).value)
                .collect();
            inner.push(next_inner);
        }
        Ok(EikonalSolution {
            grid: g.clone(),
            time: self.cfg.time,
            u,
            inner,
        })
    }

    /// Replays the optimal strategies from (slot, node) until time passes T.
    pub fn play(&self, sol: &EikonalSolution, slot: usize, node: usize) -> Vec<Round> {
        let mut out = Vec::new();
        let (mut s, mut x) = (slot, node);
        while s > 0 {
            let p = self.paul_step(|k, y| sol.inner[k][y], s, x);
            let c = self.carol_step(|k, y| sol.u[k][y], p.slot, p.to);
            out.push(Round {
                slot: s,
                x,
                paul: p,
                carol: c,
            });
            s = c.slot;
            x = c.to;
        }
        out
    }
}

/// One recorded round of optimal play.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Round {
    pub slot: usize,
    pub x: usize,
    pub paul: Choice,
    pub carol: Choice,
}

/// Memoized value function; `u[k]` is time `T − k·dt`, `inner[k]` is Carol's
/// inner value `R_ε[u]` at that slot.
#[derive(Clone, Debug)]
pub struct EikonalSolution {
    pub grid: Grid,
    pub time: TimeGrid,
    pub u: Vec<Vec<f64>>,
    pub inner: Vec<Vec<f64>>,
}

impl EikonalSolution {
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

/// Largest `|x_{k+1} − x_k| / (t_{k+1} − t_k)` over the moves of a play, with
/// times measured on the micro grid.
pub fn max_discrete_speed(grid: &Grid, dt: f64, play: &[Round]) -> f64 {
    let mut worst = 0.0f64;
    for r in play {
        for (from, c) in [(r.x, r.paul), (r.paul.to, r.carol)] {
            if c.to != from {
                let elapsed = c.advance as f64 * dt;
                worst = worst.max(dist(grid.coords(from), grid.coords(c.to)) / elapsed);
            }
        }
    }
    worst
}
