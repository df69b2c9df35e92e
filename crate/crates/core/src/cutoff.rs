//! The time cutoff C_ε, the time-reset rules of the geometric games, and the
//! micro time grid on which variable resets are memoized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp exponents: C_ε(r) lies in `[ε^lo_exp, ε^hi_exp]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub eps: f64,
    pub lo_exp: f64,
    pub hi_exp: f64,
}

impl CutoffParams {
    pub fn new(eps: f64) -> Result<Self> {
        Self::with_exponents(eps, 1.5, 0.5)
    }

    /// Requires `0 < hi_exp < 1 < lo_exp < 2`, so that every moved-branch
    /// reset dominates the stay reset ε² and stays below 1.
    pub fn with_exponents(eps: f64, lo_exp: f64, hi_exp: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0,1), got {eps}")));
        }
        if !(0.0 < hi_exp && hi_exp < 1.0 && 1.0 < lo_exp && lo_exp < 2.0) {
            return Err(Error::Config(format!(
                "cutoff exponents need 0 < hi_exp < 1 < lo_exp < 2, got hi_exp={hi_exp}, lo_exp={lo_exp}"
            )));
        }
        Ok(CutoffParams { eps, lo_exp, hi_exp })
    }

    pub fn lower(&self) -> f64 {
        self.eps.powf(self.lo_exp)
    }

    pub fn upper(&self) -> f64 {
        self.eps.powf(self.hi_exp)
    }

    pub fn stay(&self) -> f64 {
        self.eps * self.eps
    }
}

/// `(r ∨ ε^lo) ∧ ε^hi`; `r = +∞` clamps to the upper bound.
pub fn cutoff(params: &CutoffParams, r: f64) -> f64 {
    debug_assert!(r >= 0.0 || r.is_nan());
    r.max(params.lower()).min(params.upper())
}

/// Reset after a move in the eikonal game: ε/|v| clamped, or ε² when the
/// player stayed.
pub fn eikonal_time_reset(params: &CutoffParams, moved: bool, speed_magnitude: f64) -> Result<f64> {
    if !(speed_magnitude >= 0.0) {
        return Err(Error::Input(format!("speed magnitude must be >= 0, got {speed_magnitude}")));
    }
    if !moved {
        return Ok(params.stay());
    }
    let r = if speed_magnitude == 0.0 {
        f64::INFINITY
    } else {
        params.eps / speed_magnitude
    };
    Ok(cutoff(params, r))
}

/// Which player's sign condition applies to the curvature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// Maximizer; active when κ* > 0.
    Paul,
    /// Minimizer; active when κ_* < 0.
    Carol,
}

/// Reset in the curvature game: ε/|κ| clamped on the active branch, else ε².
pub fn icf_time_reset(params: &CutoffParams, side: Side, grad_nonzero: bool, kappa: f64) -> f64 {
    let active = grad_nonzero
        && match side {
            Side::Paul => kappa > 0.0,
            Side::Carol => kappa < 0.0,
        };
    if active {
        cutoff(params, params.eps / kappa.abs())
    } else {
        params.stay()
    }
}

/// Backward micro time grid: slot `k` is time `T - k·dt`, slot 0 is `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub dt: f64,
    pub slots: usize,
}

impl TimeGrid {
    /// Covers `[t_start, t_final]`; the horizon must be a multiple of `dt`.
    pub fn new(t_final: f64, t_start: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !t_final.is_finite() || !t_start.is_finite() {
            return Err(Error::Config(format!("bad time grid: T={t_final}, t_start={t_start}, dt={dt}")));
        }
        let horizon = (t_final - t_start).max(0.0);
        let k = (horizon / dt).round();
        if (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::Config(format!("dt={dt} does not divide the horizon {horizon}")));
        }
        Ok(TimeGrid {
            t_final,
            dt,
            slots: k as usize,
        })
    }

    pub fn time(&self, slot: usize) -> f64 {
        self.t_final - slot as f64 * self.dt
    }

    /// Number of whole slots covered by a reset, rounded down, at least one.
    pub fn advance(&self, reset: f64) -> usize {
        (((reset / self.dt) * (1.0 + 1e-12)).floor() as usize).max(1)
    }

    /// Slot reached from `slot` after `reset`; 0 means "at or after T".
    pub fn target(&self, slot: usize, reset: f64) -> usize {
        slot.saturating_sub(self.advance(reset))
    }

    pub fn slot_of(&self, t: f64) -> usize {
        (((self.t_final - t) / self.dt).round().max(0.0) as usize).min(self.slots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn cutoff_branches() {
        let p = CutoffParams::new(0.01).unwrap();
        assert!(close(cutoff(&p, 0.0005), 0.001));
        assert!(close(cutoff(&p, 0.05), 0.05));
        assert!(close(cutoff(&p, 0.5), 0.1));
        assert!(close(cutoff(&p, f64::INFINITY), 0.1));
        assert!(CutoffParams::new(1.0).is_err());
        assert!(CutoffParams::new(0.0).is_err());
        assert!(CutoffParams::with_exponents(0.1, 0.5, 1.5).is_err());
    }

    #[test]
    fn eikonal_resets() {
        let p = CutoffParams::new(0.01).unwrap();
        assert!(close(eikonal_time_reset(&p, false, 3.0).unwrap(), 1e-4));
        assert!(close(eikonal_time_reset(&p, true, 1.0).unwrap(), 0.01));
        assert!(close(eikonal_time_reset(&p, true, 0.0).unwrap(), 0.1));
        assert!(eikonal_time_reset(&p, true, -1.0).is_err());
    }

    #[test]
    fn icf_resets() {
        let p = CutoffParams::new(0.01).unwrap();
        assert!(close(icf_time_reset(&p, Side::Paul, false, 5.0), 1e-4));
        assert!(close(icf_time_reset(&p, Side::Paul, true, 2.0), 0.005));
        assert!(close(icf_time_reset(&p, Side::Paul, true, -1.0), 1e-4));
        assert!(close(icf_time_reset(&p, Side::Carol, true, -2.0), 0.005));
        assert!(close(icf_time_reset(&p, Side::Carol, true, 2.0), 1e-4));
    }

    #[test]
    fn time_grid_slots() {
        let tg = TimeGrid::new(1.0, 0.5, 0.0025).unwrap();
        assert_eq!(tg.slots, 200);
        assert_eq!(tg.advance(0.1), 40);
        assert_eq!(tg.advance(0.0001), 1);
        assert_eq!(tg.target(10, 0.1), 0);
        assert!(TimeGrid::new(1.0, 0.5, 0.3).is_err());
    }

    proptest! {
        #[test]
        fn cutoff_range_and_monotone(eps in 1e-4..0.5f64, r1 in 0.0..2.0f64, r2 in 0.0..2.0f64) {
            let p = CutoffParams::new(eps).unwrap();
            let (a, b) = (cutoff(&p, r1), cutoff(&p, r2));
            prop_assert!(a >= eps.powf(1.5) && a <= eps.sqrt());
            if r1 <= r2 { prop_assert!(a <= b); }
        }

        #[test]
        fn resets_positive(eps in 1e-4..0.5f64, v in 0.0..100.0f64, k in -100.0..100.0f64, g: bool) {
            let p = CutoffParams::new(eps).unwrap();
            let moved = eikonal_time_reset(&p, true, v).unwrap();
            prop_assert!(moved >= p.lower() && moved > 0.0);
            prop_assert_eq!(eikonal_time_reset(&p, false, v).unwrap(), eps * eps);
            for side in [Side::Paul, Side::Carol] {
                let r = icf_time_reset(&p, side, g, k);
                prop_assert!(r == eps * eps || r >= p.lower());
            }
        }
    }
}
