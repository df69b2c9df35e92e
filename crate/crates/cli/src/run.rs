//! The `run` and `oracle` subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use nlgames::config::{
    kernel_by_name, measure_by_name, nonlinearity_by_name, parse_call, speed_by_name, terminal_by_name, ExperimentConfig, GameKind,
    TerminalData,
};
use nlgames::cutoff::{CutoffParams, TimeGrid};
use nlgames::eikonal::{EikonalConfig, EikonalGame};
use nlgames::fields::{dist, field_header_json, field_to_csv, Grid, Point, ScalarField};
use nlgames::icf::{zero_level_radius, IcfConfig, IcfGame};
use nlgames::oracles::{eikonal_exact, pide_reference, radius_ode, CurvatureTable, PideReference, RadiusCurve};
use nlgames::pide::{self, NonlinearityKind, PideConfig};
use nlgames::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "nlgames-run";
pub const MANIFEST_VERSION: u32 = 1;

/// One line of the error table.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub eps: f64,
    pub h: f64,
    pub dt: f64,
    pub error_sup: Option<f64>,
    pub error_levelset: Option<f64>,
    pub runtime_s: Option<f64>,
    /// `ok`, or the numerical error that stopped this ε.
    pub status: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    schema_version: u32,
    name: &'a str,
    versions: Versions,
    seed: u64,
    csv: String,
    rows: usize,
    flagged: Vec<f64>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Versions {
    nlgames: &'static str,
    cli: &'static str,
}

pub struct RunReport {
    pub csv: PathBuf,
    pub rows: usize,
    pub flagged: usize,
}

/// What the game produced at the probe time and what it is compared with.
struct Outcome {
    game: ScalarField,
    reference: Option<Reference>,
}

enum Reference {
    Field(ScalarField),
    /// Radius of a shrinking ball centred at the origin.
    Radius(f64),
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<RunReport> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::with_capacity(cfg.schedule.len());
    for &eps in &cfg.schedule {
        let start = Instant::now();
        let solved = solve(cfg, eps);
        let elapsed = start.elapsed().as_secs_f64();
        let grid = cfg.grid_for(eps)?;
        let dt = match cfg.game {
            GameKind::Pide => eps,
            _ => cfg.time.dt_over_eps2 * eps * eps,
        };
        let mut row = Row {
            eps,
            h: grid.h[0],
            dt,
            error_sup: None,
            error_levelset: None,
            runtime_s: cfg.output.timing.then_some(elapsed),
            status: "ok".into(),
        };
        match solved {
            Ok(o) => {
                let (sup, level) = errors(cfg, &o);
                row.error_sup = sup;
                row.error_levelset = level;
            }
            Err(e @ (Error::Config(_) | Error::UnknownName { .. })) => return Err(e.into()),
            Err(e) => row.status = format!("error: {e}"),
        }
        rows.push(row);
    }
    let csv_path = out.join(format!("{}.csv", cfg.name));
    let mut w = csv::Writer::from_path(&csv_path)?;
    if rows.is_empty() {
        w.write_record(["eps", "h", "dt", "error_sup", "error_levelset", "runtime_s", "status"])?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let flagged: Vec<f64> = rows.iter().filter(|r| r.status != "ok").map(|r| r.eps).collect();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        schema_version: MANIFEST_VERSION,
        name: &cfg.name,
        versions: Versions {
            nlgames: nlgames::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
        },
        seed: cfg.seed,
        csv: format!("{}.csv", cfg.name),
        rows: rows.len(),
        flagged: flagged.clone(),
        config: cfg,
    };
    std::fs::write(
        out.join(format!("{}.manifest.json", cfg.name)),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(RunReport {
        csv: csv_path,
        rows: rows.len(),
        flagged: flagged.len(),
    })
}

fn errors(cfg: &ExperimentConfig, o: &Outcome) -> (Option<f64>, Option<f64>) {
    let g = &o.game.grid;
    match &o.reference {
        None => (None, None),
        Some(Reference::Field(r)) => {
            let sup = (0..g.len())
                .filter(|&k| cfg.in_probe(g.coords(k), g.dim))
                .map(|k| (o.game.values[k] - r.values[k]).abs())
                .fold(0.0, f64::max);
            let a = crossings(&o.game, cfg);
            let b = crossings(r, cfg);
            (Some(sup), hausdorff(&a, &b))
        }
        Some(Reference::Radius(rho)) => {
            let level = zero_level_radius(&o.game, [0.0, 0.0], 64).map(|r| (r - rho).abs());
            (None, level)
        }
    }
}

/// Zero crossings of the piecewise-linear interpolant along grid edges inside
/// the probe region.
fn crossings(u: &ScalarField, cfg: &ExperimentConfig) -> Vec<Point> {
    let g = &u.grid;
    let mut out = Vec::new();
    let mut edge = |a: usize, b: usize| {
        let (va, vb) = (u.values[a], u.values[b]);
        let (pa, pb) = (g.coords(a), g.coords(b));
        if !(cfg.in_probe(pa, g.dim) && cfg.in_probe(pb, g.dim)) {
            return;
        }
        if va == 0.0 {
            out.push(pa);
        } else if va * vb < 0.0 {
            let s = va / (va - vb);
            out.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
        }
    };
    let (nx, ny) = (g.n[0], if g.dim == 2 { g.n[1] } else { 1 });
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            if i + 1 < nx {
                edge(k, g.index(i + 1, j));
            }
            if g.dim == 2 && j + 1 < ny {
                edge(k, g.index(i, j + 1));
            }
        }
    }
    out
}

fn hausdorff(a: &[Point], b: &[Point]) -> Option<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Some(0.0),
        (true, false) | (false, true) => return None,
        _ => {}
    }
    let one_way = |p: &[Point], q: &[Point]| {
        p.iter()
            .map(|x| q.iter().map(|y| dist(*x, *y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Some(one_way(a, b).max(one_way(b, a)))
}

fn time_grid(cfg: &ExperimentConfig, eps: f64) -> Result<TimeGrid> {
    let t = &cfg.time;
    TimeGrid::new(t.t_final, t.t_final - t.probe, t.dt_over_eps2 * eps * eps)
}

/// Constant speed `c` when the speed is `const(c)`.
fn constant_speed(name: &str) -> Result<Option<f64>> {
    let (n, args) = parse_call(name)?;
    Ok((n == "const").then(|| args[0]))
}

/// Initial radius of `cone(r)` terminal data.
fn cone_radius(name: &str) -> Result<Option<f64>> {
    let (n, args) = parse_call(name)?;
    Ok((n == "cone").then(|| args[0]))
}

fn solve(cfg: &ExperimentConfig, eps: f64) -> Result<Outcome> {
    let grid = cfg.grid_for(eps)?;
    let term = terminal_by_name(&cfg.problem.terminal)?;
    let ut = term.sample(&grid);
    let tau = cfg.time.probe;
    let p = &cfg.problem;
    let missing = |what: &str| Error::Config(format!("problem.{what} is required"));
    match cfg.game {
        GameKind::Eikonal => {
            let name = p.speed.as_deref().ok_or_else(|| missing("speed"))?;
            let ecfg = EikonalConfig {
                cutoff: CutoffParams::new(eps)?,
                grid: grid.clone(),
                time: time_grid(cfg, eps)?,
            };
            let game = EikonalGame::new(speed_by_name(name)?, ecfg)?;
            let sol = game.solve(&ut)?;
            let reference = eikonal_reference(name, &term, &grid, tau)?.map(Reference::Field);
            Ok(Outcome {
                game: sol.slice(sol.time.slots),
                reference,
            })
        }
        GameKind::Pide => {
            let f = nonlinearity_by_name(p.nonlinearity.as_deref().ok_or_else(|| missing("nonlinearity"))?)?;
            let m = measure_by_name(p.measure.as_deref().ok_or_else(|| missing("measure"))?, grid.dim, p.trunc_r)?;
            let pcfg = PideConfig::new(eps, p.alpha, grid.clone());
            let t = cfg.time.t_final;
            let slices = pide::solve(&f, &m, &ut, t, t - tau, &pcfg)?;
            let reference = match f.kind {
                NonlinearityKind::LinearNonlocal => Some(Reference::Field(linear_reference(&m, &ut, tau)?)),
                _ => None,
            };
            Ok(Outcome {
                game: slices.last().cloned().unwrap_or(ut),
                reference,
            })
        }
        GameKind::Icf => {
            let kernel = kernel_by_name(p.kernel.as_deref().ok_or_else(|| missing("kernel"))?, grid.dim)?;
            let t = cfg.time.t_final;
            let mut icfg = IcfConfig::standard(eps, grid.clone(), t, t - tau)?;
            icfg.time = time_grid(cfg, eps)?;
            icfg.menu.directions = cfg.icf.directions;
            icfg.menu.radii = cfg.icf.radii.clone();
            icfg.menu.guide = cfg.icf.guide;
            let game = IcfGame::new(kernel.clone(), icfg, &ut)?;
            let sol = game.solve(&ut)?;
            let reference = match cone_radius(&p.terminal)? {
                Some(r0) => Some(Reference::Radius(radius_curve(&kernel, r0, tau).at(tau))),
                None if parse_call(&p.terminal)?.0 == "affine" => Some(Reference::Field(ut.clone())),
                None => None,
            };
            Ok(Outcome {
                game: sol.slice(sol.time.slots),
                reference,
            })
        }
    }
}

fn eikonal_reference(speed: &str, term: &TerminalData, grid: &Grid, tau: f64) -> Result<Option<ScalarField>> {
    Ok(constant_speed(speed)?.map(|c| ScalarField::from_fn(grid, |x| eikonal_exact(c, &|p| term.at(p), grid.dim, tau, x))))
}

/// Explicit reference for F = −l, halving the step until it is stable.
fn linear_reference(m: &nlgames::levy::LevyMeasure, ut: &ScalarField, tau: f64) -> Result<ScalarField> {
    let opts = PideReference::for_grid(&ut.grid);
    let mut fine_dt = 1e-3;
    loop {
        match pide_reference(m, ut, tau, fine_dt, &opts) {
            Err(Error::Config(_)) if fine_dt > 1e-7 => fine_dt *= 0.5,
            other => return other,
        }
    }
}

fn radius_curve(kernel: &nlgames::curvature::Kernel, r0: f64, tau: f64) -> RadiusCurve {
    let table = CurvatureTable::kernel_balls(kernel, 0.04 * r0, 1.2 * r0, 33, 256);
    radius_ode(&table, &kernel.name(), r0, tau, 1e-4)
}

/// Writes the oracle solution for each ε of the schedule; returns the paths.
pub fn dump_oracles(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let term = terminal_by_name(&cfg.problem.terminal)?;
    let tau = cfg.time.probe;
    let p = &cfg.problem;
    let mut written = Vec::new();
    let no_oracle = || Error::Config(format!("no oracle for this {:?} problem", cfg.game));
    if cfg.game == GameKind::Icf {
        let kernel = kernel_by_name(p.kernel.as_deref().unwrap_or_default(), cfg.grid.dim)?;
        let r0 = cone_radius(&p.terminal)?.ok_or_else(no_oracle)?;
        let curve = radius_curve(&kernel, r0, tau);
        let path = out.join(format!("{}.radius.csv", cfg.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["s", "rho"])?;
        for (s, rho) in &curve.samples {
            w.write_record([format!("{s:.17e}"), format!("{rho:.17e}")])?;
        }
        w.flush()?;
        written.push(path);
        return Ok(written);
    }
    for &eps in &cfg.schedule {
        let grid = cfg.grid_for(eps)?;
        let field = match cfg.game {
            GameKind::Eikonal => eikonal_reference(p.speed.as_deref().unwrap_or_default(), &term, &grid, tau)?.ok_or_else(no_oracle)?,
            _ => {
                let f = nonlinearity_by_name(p.nonlinearity.as_deref().unwrap_or_default())?;
                if !matches!(f.kind, NonlinearityKind::LinearNonlocal) {
                    return Err(no_oracle().into());
                }
                let m = measure_by_name(p.measure.as_deref().unwrap_or_default(), grid.dim, p.trunc_r)?;
                linear_reference(&m, &term.sample(&grid), tau)?
            }
        };
        let stem = format!("{}.oracle.eps-{eps}", cfg.name);
        let csv_path = out.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, field_to_csv(&field)?)?;
        std::fs::write(out.join(format!("{stem}.json")), field_header_json(&field)? + "\n")?;
        written.push(csv_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cfg(game: &str, extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
name = "t"
game = "{game}"
schedule = [0.2]
[grid]
dim = 1
lo = -1.0
hi = 1.0
h_over_eps = 0.25
[time]
t_final = 1.0
probe = 0.2
[problem]
{extra}
"#
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff(&[], &[]), Some(0.0));
        assert_eq!(hausdorff(&[[0.0, 0.0]], &[]), None);
        assert_eq!(hausdorff(&[[0.0, 0.0]], &[[0.0, 0.5], [0.0, 0.1]]), Some(0.5));
    }

    #[test]
    fn crossings_of_a_line() {
        let cfg = line_cfg("eikonal", "terminal = \"affine(0.05, 1)\"\nspeed = \"const(1)\"");
        let g = Grid::line(-1.0, 1.0, 11).unwrap();
        let u = ScalarField::from_fn(&g, |x| x[0] + 0.05);
        let c = crossings(&u, &cfg);
        assert_eq!(c.len(), 1);
        assert!((c[0][0] + 0.05).abs() < 1e-12);
    }

    #[test]
    fn eikonal_constant_speed_has_a_reference() {
        let cfg = line_cfg("eikonal", "terminal = \"plateau(0.2)\"\nspeed = \"const(1)\"");
        let o = solve(&cfg, 0.2).unwrap();
        let (sup, level) = errors(&cfg, &o);
        assert!(sup.unwrap() < 1e-12);
        assert!(level.unwrap() < 1e-12);
        let lin = line_cfg("eikonal", "terminal = \"plateau(0.2)\"\nspeed = \"linear\"");
        assert!(solve(&lin, 0.2).unwrap().reference.is_none());
    }
}
