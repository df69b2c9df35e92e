//! Property suites behind `nlgames verify`, on small grids with fixed seeds.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use nlgames::config::GameKind;
use nlgames::curvature::{kappa, CurvatureQuadrature, Kernel};
use nlgames::cutoff::{cutoff, CutoffParams};
use nlgames::eikonal::{EikonalConfig, EikonalGame, SpeedField};
use nlgames::fields::{eval_test, norm, Grid, QuadraticTest, ScalarField};
use nlgames::icf::{IcfConfig, IcfGame};
use nlgames::levy::LevyMeasure;
use nlgames::pide::{self, check_ellipticity, Nonlinearity, NonlinearityKind, PideConfig};

pub const SUITES: [&str; 8] = ["cutoff", "ellipticity", "monotonicity", "commutation", "duality", "bounds", "curvature", "chain"];

pub const REPORT_SCHEMA: &str = "nlgames-verify";
pub const REPORT_VERSION: u32 = 1;

pub struct Options {
    pub suites: Vec<String>,
    pub seed: u64,
    /// Restrict game-specific properties to one game.
    pub game: Option<GameKind>,
    /// Add a nonlinearity that increases with the nonlocal term.
    pub planted_fault: bool,
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    pub suite: String,
    pub property: String,
    pub subject: String,
    pub pass: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub schema_version: u32,
    pub seed: u64,
    pub all_pass: bool,
    pub verdicts: Vec<Verdict>,
}

pub fn verify(opts: &Options) -> Result<Report, String> {
    for s in &opts.suites {
        if !SUITES.contains(&s.as_str()) {
            return Err(format!("unknown suite `{s}` (known: {})", SUITES.join(", ")));
        }
    }
    let mut out = Vec::new();
    let wants = |g: GameKind| opts.game.map_or(true, |x| x == g);
    for (i, suite) in SUITES.iter().enumerate() {
        if !opts.suites.iter().any(|s| s == suite) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
        let mut found = match *suite {
            "cutoff" => vec![cutoff_suite(&mut rng)],
            "ellipticity" if wants(GameKind::Pide) => ellipticity_suite(&mut rng, opts.planted_fault),
            "monotonicity" | "commutation" => {
                let mono = *suite == "monotonicity";
                let mut v = Vec::new();
                if wants(GameKind::Pide) {
                    v.push(pide_structure(&mut rng, mono));
                }
                if wants(GameKind::Eikonal) {
                    v.push(slot_structure("eikonal", &mut rng, mono, &EikonalToy::new()));
                }
                if wants(GameKind::Icf) {
                    v.push(slot_structure("icf", &mut rng, mono, &IcfToy::line()));
                }
                v
            }
            "duality" => {
                let mut v = Vec::new();
                if wants(GameKind::Eikonal) {
                    v.push(eikonal_duality(&mut rng));
                }
                if wants(GameKind::Icf) {
                    v.push(icf_duality(&mut rng));
                }
                v
            }
            "bounds" => bounds_suite(opts),
            "curvature" => curvature_suite(&mut rng),
            "chain" if wants(GameKind::Icf) => vec![chain_suite()],
            _ => Vec::new(),
        };
        for v in &mut found {
            v.suite = suite.to_string();
        }
        out.extend(found);
    }
    Ok(Report {
        schema: REPORT_SCHEMA,
        schema_version: REPORT_VERSION,
        seed: opts.seed,
        all_pass: out.iter().all(|v| v.pass),
        verdicts: out,
    })
}

fn verdict(property: &str, subject: &str, pass: bool, detail: String, witness: Option<Value>) -> Verdict {
    Verdict {
        suite: String::new(),
        property: property.into(),
        subject: subject.into(),
        pass,
        detail,
        witness,
    }
}

fn cutoff_suite(rng: &mut ChaCha8Rng) -> Verdict {
    for _ in 0..1000 {
        let eps = rng.gen_range(1e-4..0.5);
        let p = CutoffParams::new(eps).expect("eps in range");
        let (a, b) = {
            let (x, y): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            (x.min(y), x.max(y))
        };
        let (ca, cb) = (cutoff(&p, a), cutoff(&p, b));
        if !(p.lower() <= ca && ca <= p.upper() && ca <= cb) {
            return verdict("range and monotonicity", "cutoff", false, "violation".into(), Some(json!({"eps": eps, "r": a, "r2": b, "c": ca, "c2": cb})));
        }
    }
    verdict("range and monotonicity", "cutoff", true, "1000 draws".into(), None)
}

fn ellipticity_suite(rng: &mut ChaCha8Rng, planted: bool) -> Vec<Verdict> {
    let mut fs = vec![
        Nonlinearity::linear_nonlocal(),
        Nonlinearity::advection([1.0, 0.5]),
        Nonlinearity::nonlocal_plus_quadratic(),
    ];
    if planted {
        fs.push(Nonlinearity {
            name: "planted: +l".into(),
            kind: NonlinearityKind::Custom {
                f: Arc::new(|_, _, _, _, l| l),
                uses_derivatives: false,
            },
            k1: 0.0,
            k2: 0.0,
            lipschitz_l: 1.0,
        });
    }
    fs.iter()
        .map(|f| match check_ellipticity(f, 2, 500, rng) {
            None => verdict("ellipticity", &f.name, true, "500 ordered pairs".into(), None),
            Some(w) => verdict(
                "ellipticity",
                &f.name,
                false,
                "A ≤ B and l ≤ m but F(A,l) < F(B,m)".into(),
                serde_json::to_value(w).ok(),
            ),
        })
        .collect()
}

/// Relative rounding allowance for the PIDE game, whose lift and quadrature
/// sum in floating point.
fn pide_slack(scale: f64) -> f64 {
    64.0 * f64::EPSILON * (1.0 + scale)
}

fn pide_structure(rng: &mut ChaCha8Rng, mono: bool) -> Verdict {
    let grid = Grid::line(-1.0, 1.0, 21).expect("grid");
    let n = grid.len();
    let f = Nonlinearity::linear_nonlocal();
    let m = LevyMeasure::uniform(1, 1.0);
    let cfg = PideConfig::new(0.05, 0.5, grid.clone());
    let step = |v: Vec<f64>| pide::step_slice(&ScalarField::new(grid.clone(), v).expect("len"), 0.0, &f, &m, &cfg).expect("step");
    for _ in 0..20 {
        // within the caps, the admissible data of the game
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.25..0.25)).collect();
        let su = step(u.clone());
        let (w, c) = if mono {
            (u.iter().map(|x| x + rng.gen_range(0.0..0.25)).collect::<Vec<_>>(), 0.0)
        } else {
            let c = rng.gen_range(-2.0..2.0);
            (u.iter().map(|x| x + c).collect(), c)
        };
        let sw = step(w.clone());
        for k in 0..n {
            let bad = if mono {
                su.values[k] > sw.values[k]
            } else {
                (sw.values[k] - su.values[k] - c).abs() > pide_slack(su.values[k].abs() + c.abs())
            };
            if bad {
                return verdict(
                    if mono { "monotonicity" } else { "commutation" },
                    "pide",
                    false,
                    format!("node {k}"),
                    Some(json!({"u": u, "w": w, "c": c, "node": k, "s_u": su.values[k], "s_w": sw.values[k]})),
                );
            }
        }
    }
    verdict(if mono { "monotonicity" } else { "commutation" }, "pide", true, "20 random pairs on 21 nodes".into(), None)
}

/// A game whose round reads a slot-indexed field.
trait SlotGame {
    fn nodes(&self) -> usize;
    fn slots(&self) -> usize;
    fn round(&self, phi: &(dyn Fn(usize, usize) -> f64 + Sync), slot: usize, x: usize) -> f64;
}

struct EikonalToy(EikonalGame);

impl EikonalToy {
    fn new() -> Self {
        let cfg = EikonalConfig::standard(0.4, 1, -1.0, 1.0, 1.0, 0.52).expect("config");
        EikonalToy(EikonalGame::new(SpeedField::two_zone(0.1).expect("speed"), cfg).expect("game"))
    }
}

impl SlotGame for EikonalToy {
    fn nodes(&self) -> usize {
        self.0.cfg.grid.len()
    }
    fn slots(&self) -> usize {
        self.0.cfg.time.slots
    }
    fn round(&self, phi: &(dyn Fn(usize, usize) -> f64 + Sync), slot: usize, x: usize) -> f64 {
        self.0.paul_step(|s, y| self.0.carol_step(phi, s, y).value, slot, x).value
    }
}

struct IcfToy(IcfGame);

impl IcfToy {
    fn line() -> Self {
        let grid = Grid::line(-1.0, 1.0, 21).expect("grid");
        let cfg = IcfConfig::standard(0.2, grid.clone(), 1.0, 0.8).expect("config");
        let guide = ScalarField::from_fn(&grid, |x| (2.0 * x[0]).sin() + 0.3 * x[0] * x[0]);
        IcfToy(IcfGame::new(Kernel::power(1, 0.5, 0.5).expect("kernel"), cfg, &guide).expect("game"))
    }
}

impl SlotGame for IcfToy {
    fn nodes(&self) -> usize {
        self.0.cfg.grid.len()
    }
    fn slots(&self) -> usize {
        self.0.cfg.time.slots
    }
    fn round(&self, phi: &(dyn Fn(usize, usize) -> f64 + Sync), slot: usize, x: usize) -> f64 {
        self.0.game_step(phi, slot, x)
    }
}

fn random_slices(n: usize, slots: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..=slots).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn slot_structure(name: &str, rng: &mut ChaCha8Rng, mono: bool, game: &dyn SlotGame) -> Verdict {
    let property = if mono { "monotonicity" } else { "commutation" };
    let (n, slots) = (game.nodes(), game.slots());
    for _ in 0..20 {
        let a = random_slices(n, slots, rng);
        let b = random_slices(n, slots, rng);
        let c = rng.gen_range(-2.0..2.0);
        let slot = rng.gen_range(1..=slots);
        for x in 0..n {
            let base = game.round(&|s, y| a[s][y], slot, x);
            let (other, bad) = if mono {
                let v = game.round(&|s, y| a[s][y] + b[s][y].abs(), slot, x);
                (v, v < base)
            } else {
                let v = game.round(&|s, y| a[s][y] + c, slot, x);
                (v, v != base + c)
            };
            if bad {
                return verdict(property, name, false, format!("slot {slot}, node {x}"), Some(json!({"phi": a, "bump": b, "c": c, "slot": slot, "node": x, "base": base, "other": other})));
            }
        }
    }
    verdict(property, name, true, format!("20 random pairs on {n} nodes"), None)
}

fn eikonal_duality(rng: &mut ChaCha8Rng) -> Verdict {
    let cfg = EikonalConfig::standard(0.4, 1, -1.0, 1.0, 1.0, 0.52).expect("config");
    for v in [SpeedField::constant(0.7), SpeedField::linear(), SpeedField::two_zone(0.1).expect("speed")] {
        let plus = EikonalGame::new(v.clone(), cfg.clone()).expect("game");
        let minus = EikonalGame::new(v.negated(), cfg.clone()).expect("game");
        let (n, slots) = (cfg.grid.len(), cfg.time.slots);
        for _ in 0..10 {
            let phi = random_slices(n, slots, rng);
            let slot = rng.gen_range(1..=slots);
            for x in 0..n {
                let c = plus.carol_step(|s, y| phi[s][y], slot, x).value;
                let p = minus.paul_step(|s, y| -phi[s][y], slot, x).value;
                if c != -p {
                    return verdict("duality", "eikonal", false, v.name.clone(), Some(json!({"phi": phi, "slot": slot, "node": x})));
                }
            }
        }
    }
    verdict("duality", "eikonal", true, "30 inputs over three speeds".into(), None)
}

fn icf_duality(rng: &mut ChaCha8Rng) -> Verdict {
    let toy = IcfToy::line();
    let g = &toy.0;
    let (n, slots) = (toy.nodes(), toy.slots());
    for _ in 0..20 {
        let phi = random_slices(n, slots, rng);
        let slot = rng.gen_range(1..=slots);
        for x in 0..n {
            if g.carol_step(|s, y| phi[s][y], slot, x).value != -g.paul_step(|s, y| -phi[s][y], slot, x).value {
                return verdict("duality", "icf", false, format!("slot {slot}, node {x}"), Some(json!({"phi": phi, "slot": slot, "node": x})));
            }
        }
    }
    verdict("duality", "icf", true, "20 inputs".into(), None)
}

fn within(rows: &[Vec<f64>], lo: f64, hi: f64, slack: f64) -> Option<usize> {
    rows.iter().position(|r| r.iter().any(|&v| v < lo - slack || v > hi + slack))
}

fn bounds_suite(opts: &Options) -> Vec<Verdict> {
    let wants = |g: GameKind| opts.game.map_or(true, |x| x == g);
    let grid = Grid::line(-1.0, 1.0, 21).expect("grid");
    let ut = ScalarField::from_fn(&grid, |x| (3.0 * x[0]).sin() * (1.0 - x[0] * x[0]));
    let (lo, hi) = (ut.min(), ut.max());
    let report = |name: &str, miss: Option<usize>| match miss {
        None => verdict("inf u_T ≤ u ≤ sup u_T", name, true, "every slot".into(), None),
        Some(s) => verdict("inf u_T ≤ u ≤ sup u_T", name, false, format!("slot {s}"), Some(json!({"slot": s}))),
    };
    let mut out = Vec::new();
    if wants(GameKind::Eikonal) {
        let game = EikonalToy::new().0;
        let sol = game.solve(&ut).expect("solve");
        out.push(report("eikonal", within(&sol.u, lo, hi, 0.0)));
    }
    if wants(GameKind::Icf) {
        let toy = IcfToy::line();
        let sol = toy.0.solve(&ut).expect("solve");
        out.push(report("icf", within(&sol.u, lo, hi, 0.0)));
    }
    if wants(GameKind::Pide) {
        let cfg = PideConfig::new(0.05, 0.5, grid.clone());
        let slices = pide::solve(&Nonlinearity::linear_nonlocal(), &LevyMeasure::uniform(1, 1.0), &ut, 1.0, 0.8, &cfg).expect("solve");
        let rows: Vec<Vec<f64>> = slices.into_iter().map(|s| s.values).collect();
        out.push(report("pide", within(&rows, lo, hi, pide_slack(hi.abs().max(lo.abs())))));
    }
    out
}

fn random_quadratic(rng: &mut ChaCha8Rng) -> QuadraticTest {
    let g01 = rng.gen_range(-2.0..2.0);
    QuadraticTest::new(
        2,
        [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
        rng.gen_range(-0.5..0.5),
        [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        [[rng.gen_range(-2.0..2.0), g01], [g01, rng.gen_range(-2.0..2.0)]],
    )
}

fn curvature_suite(rng: &mut ChaCha8Rng) -> Vec<Verdict> {
    let k = Kernel::power(2, 0.5, 1.0).expect("kernel");
    let mut q = CurvatureQuadrature::with_exclusion(1e-7);
    q.n_theta = 256;
    let mut out = Vec::new();

    let plane = QuadraticTest::new(2, [0.0, 0.0], 0.0, [0.6, -0.8], [[0.0; 2]; 2]);
    let e = kappa([0.0, 0.0], &plane, &k, &q);
    out.push(verdict(
        "hyperplane is flat",
        &k.name(),
        e.kappa_star.abs() <= e.error,
        format!("κ* = {:e}, error bar {:e}", e.kappa_star, e.error),
        None,
    ));

    let mut order = None;
    let mut nested = None;
    for _ in 0..20 {
        let u = random_quadratic(rng);
        let x = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
        let eu = kappa(x, &u, &k, &q);
        if eu.kappa_sub > eu.kappa_star && order.is_none() {
            order = Some(json!({"x": x, "kappa_star": eu.kappa_star, "kappa_sub": eu.kappa_sub}));
        }
        if norm(eval_test(&u, x).1) < 0.05 {
            continue;
        }
        // V = U + a|z − x|² lies above U and touches it at x
        let a = rng.gen_range(0.1..3.0);
        let mut v = u.clone();
        let d = [x[0] - u.center[0], x[1] - u.center[1]];
        v.gamma[0][0] += 2.0 * a;
        v.gamma[1][1] += 2.0 * a;
        v.p = [u.p[0] - 2.0 * a * d[0], u.p[1] - 2.0 * a * d[1]];
        v.c = u.c + a * (d[0] * d[0] + d[1] * d[1]);
        let ev = kappa(x, &v, &k, &q);
        if eu.kappa_star > ev.kappa_star + eu.error + ev.error && nested.is_none() {
            nested = Some(json!({"x": x, "a": a, "kappa_u": eu.kappa_star, "kappa_v": ev.kappa_star}));
        }
    }
    out.push(verdict("κ_* ≤ κ*", &k.name(), order.is_none(), "20 random quadratics".into(), order));
    out.push(verdict("nested sets are ordered", &k.name(), nested.is_none(), "within summed error bars".into(), nested));
    out
}

fn chain_suite() -> Verdict {
    let grid = Grid::square(-1.0, 1.0, 11).expect("grid");
    let cfg = IcfConfig::standard(0.4, grid.clone(), 1.0, 0.8).expect("config");
    let ut = ScalarField::from_fn(&grid, |x| 0.5 - norm(x));
    let game = IcfGame::new(Kernel::power(2, 0.5, 0.5).expect("kernel"), cfg, &ut).expect("game");
    let sol = game.solve(&ut).expect("solve");
    let slots = game.cfg.time.slots;
    let mut moves = 0;
    for x in 0..grid.len() {
        for m in game.play(&sol, slots, x) {
            moves += 1;
            if !m.chain_holds() {
                return verdict("score chain on logged plays", "icf", false, format!("start node {x}"), serde_json::to_value(m).ok());
            }
        }
    }
    verdict("score chain on logged plays", "icf", moves > 0, format!("{moves} logged moves"), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(suites: &[&str], planted: bool) -> Options {
        Options {
            suites: suites.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            game: None,
            planted_fault: planted,
        }
    }

    #[test]
    fn empty_selection_is_empty() {
        let r = verify(&opts(&[], false)).unwrap();
        assert!(r.all_pass && r.verdicts.is_empty());
    }

    #[test]
    fn planted_fault_is_caught_with_witness() {
        let r = verify(&opts(&["ellipticity"], true)).unwrap();
        assert!(!r.all_pass);
        let bad: Vec<_> = r.verdicts.iter().filter(|v| !v.pass).collect();
        assert_eq!(bad.len(), 1);
        assert!(bad[0].subject.starts_with("planted") && bad[0].witness.is_some());
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(verify(&opts(&["nope"], false)).is_err());
    }
}
