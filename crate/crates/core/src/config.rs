//! Experiment configuration files and the name registries they refer to.
//!
//! Problem ingredients are written as calls, `name` or `name(a, b, ...)`
//! with numeric arguments, e.g. `speed = "const(1)"` or
//! `kernel = "power(0.5, 1)"`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curvature::Kernel;
use crate::eikonal::SpeedField;
use crate::error::{Error, Result};
use crate::fields::{Grid, Point, ScalarField};
use crate::levy::LevyMeasure;
use crate::pide::Nonlinearity;

/// Splits `name(a, b)` into the name and its numeric arguments.
pub fn parse_call(s: &str) -> Result<(String, Vec<f64>)> {
    let s = s.trim();
    let (name, rest) = match s.find('(') {
        None => (s, None),
        Some(i) => (&s[..i], Some(&s[i + 1..])),
    };
    let name = name.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(Error::Input(format!("malformed name in `{s}`")));
    }
    let args = match rest {
        None => Vec::new(),
        Some(r) => {
            let inner = r
                .strip_suffix(')')
                .ok_or_else(|| Error::Input(format!("missing `)` in `{s}`")))?;
            if inner.contains('(') || inner.contains(')') {
                return Err(Error::Input(format!("nested parentheses in `{s}`")));
            }
            if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|a| {
                        let v: f64 = a.trim().parse().map_err(|_| Error::Input(format!("bad number `{}` in `{s}`", a.trim())))?;
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::Input(format!("non-finite argument in `{s}`")))
                        }
                    })
                    .collect::<Result<Vec<f64>>>()?
            }
        }
    };
    Ok((name.to_string(), args))
}

fn arity(s: &str, args: &[f64], lo: usize, hi: usize) -> Result<()> {
    if args.len() < lo || args.len() > hi {
        let want = if lo == hi { format!("{lo}") } else { format!("{lo} to {hi}") };
        return Err(Error::Input(format!("`{s}` takes {want} arguments, got {}", args.len())));
    }
    Ok(())
}

pub const SPEEDS: &str = "const(c), linear, two_zone(w)";
pub const KERNELS: &str = "bump(R), power(alpha, R)";
pub const MEASURES: &str = "uniform(R), power(alpha), truncated-power(alpha, R)";
pub const NONLINEARITIES: &str = "linear_nonlocal, advection(b1[, b2]), nonlocal_plus_quadratic";
pub const TERMINALS: &str = "const(c), affine(c, p1[, p2]), plateau(w), cone(r), quadratic(g), bump(w), sine(k)";

pub fn speed_by_name(s: &str) -> Result<SpeedField> {
    let (name, args) = parse_call(s)?;
    match name.as_str() {
        "const" => {
            arity(s, &args, 1, 1)?;
            Ok(SpeedField::constant(args[0]))
        }
        "linear" => {
            arity(s, &args, 0, 0)?;
            Ok(SpeedField::linear())
        }
        "two_zone" => {
            arity(s, &args, 0, 1)?;
            SpeedField::two_zone(args.first().copied().unwrap_or(0.1))
        }
        _ => Err(Error::UnknownName {
            registry: "speed",
            name,
            known: SPEEDS,
        }),
    }
}

pub fn kernel_by_name(s: &str, dim: usize) -> Result<Kernel> {
    let (name, args) = parse_call(s)?;
    match name.as_str() {
        "bump" => {
            arity(s, &args, 0, 1)?;
            Kernel::bump(dim, args.first().copied().unwrap_or(1.0))
        }
        "power" => {
            arity(s, &args, 1, 2)?;
            Kernel::power(dim, args[0], args.get(1).copied().unwrap_or(1.0))
        }
        _ => Err(Error::UnknownName {
            registry: "kernel",
            name,
            known: KERNELS,
        }),
    }
}

/// `default_r` is the truncation radius for families that do not name one.
pub fn measure_by_name(s: &str, dim: usize, default_r: f64) -> Result<LevyMeasure> {
    let (name, args) = parse_call(s)?;
    let positive = |v: f64, what: &str| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Config(format!("{what} must be positive in `{s}`")))
        }
    };
    match name.as_str() {
        "uniform" => {
            arity(s, &args, 0, 1)?;
            Ok(LevyMeasure::uniform(dim, positive(args.first().copied().unwrap_or(default_r), "R")?))
        }
        "power" => {
            arity(s, &args, 1, 1)?;
            Ok(LevyMeasure::power(dim, positive(args[0], "alpha")?, positive(default_r, "R")?))
        }
        "truncated-power" => {
            arity(s, &args, 2, 2)?;
            Ok(LevyMeasure::power(dim, positive(args[0], "alpha")?, positive(args[1], "R")?))
        }
        _ => Err(Error::UnknownName {
            registry: "measure",
            name,
            known: MEASURES,
        }),
    }
}

pub fn nonlinearity_by_name(s: &str) -> Result<Nonlinearity> {
    let (name, args) = parse_call(s)?;
    match name.as_str() {
        "linear_nonlocal" => {
            arity(s, &args, 0, 0)?;
            Ok(Nonlinearity::linear_nonlocal())
        }
        "advection" => {
            arity(s, &args, 1, 2)?;
            Ok(Nonlinearity::advection([args[0], args.get(1).copied().unwrap_or(0.0)]))
        }
        "nonlocal_plus_quadratic" => {
            arity(s, &args, 0, 0)?;
            Ok(Nonlinearity::nonlocal_plus_quadratic())
        }
        _ => Err(Error::UnknownName {
            registry: "nonlinearity",
            name,
            known: NONLINEARITIES,
        }),
    }
}

/// Named terminal data `u_T`.
#[derive(Clone)]
pub struct TerminalData {
    pub name: String,
    pub f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

impl fmt::Debug for TerminalData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TerminalData({})", self.name)
    }
}

impl TerminalData {
    pub fn at(&self, x: Point) -> f64 {
        (self.f)(x)
    }

    pub fn sample(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x| (self.f)(x))
    }
}

pub fn terminal_by_name(s: &str) -> Result<TerminalData> {
    let (name, args) = parse_call(s)?;
    let r = |x: Point| (x[0] * x[0] + x[1] * x[1]).sqrt();
    let f: Arc<dyn Fn(Point) -> f64 + Send + Sync> = match name.as_str() {
        "const" => {
            arity(s, &args, 1, 1)?;
            let c = args[0];
            Arc::new(move |_| c)
        }
        "affine" => {
            arity(s, &args, 2, 3)?;
            let (c, p) = (args[0], [args[1], args.get(2).copied().unwrap_or(0.0)]);
            Arc::new(move |x| c + p[0] * x[0] + p[1] * x[1])
        }
        "plateau" => {
            arity(s, &args, 1, 1)?;
            let w = args[0];
            Arc::new(move |x| -(r(x) - w).max(0.0))
        }
        "cone" => {
            arity(s, &args, 1, 1)?;
            let rho = args[0];
            Arc::new(move |x| rho - r(x))
        }
        "quadratic" => {
            arity(s, &args, 1, 1)?;
            let g = args[0];
            Arc::new(move |x| 0.5 * g * (x[0] * x[0] + x[1] * x[1]))
        }
        "bump" => {
            arity(s, &args, 1, 1)?;
            let w = args[0];
            if !(w > 0.0) {
                return Err(Error::Config(format!("bump width must be positive in `{s}`")));
            }
            Arc::new(move |x| {
                let q = r(x) / w;
                if q < 1.0 {
                    (1.0 - 1.0 / (1.0 - q * q)).exp()
                } else {
                    0.0
                }
            })
        }
        "sine" => {
            arity(s, &args, 1, 1)?;
            let k = args[0];
            Arc::new(move |x| (k * x[0]).sin())
        }
        _ => {
            return Err(Error::UnknownName {
                registry: "terminal data",
                name,
                known: TERMINALS,
            })
        }
    };
    Ok(TerminalData { name: s.trim().to_string(), f })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    Pide,
    Eikonal,
    Icf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    /// Fixed node count per axis; otherwise the spacing follows `h_over_eps`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub h_over_eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    /// `T − t` at which errors are probed.
    pub probe: f64,
    #[serde(default = "default_dt_ratio")]
    pub dt_over_eps2: f64,
}

fn default_dt_ratio() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub terminal: String,
    #[serde(default)]
    pub speed: Option<String>,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub measure: Option<String>,
    #[serde(default)]
    pub nonlinearity: Option<String>,
    /// Truncation radius for measures that do not name one.
    #[serde(default = "one")]
    pub trunc_r: f64,
    /// Helen's cap exponent.
    #[serde(default = "half")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcfSection {
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "yes")]
    pub guide: bool,
}

fn default_directions() -> usize {
    8
}

fn default_radii() -> Vec<f64> {
    vec![0.25, 0.5]
}

fn yes() -> bool {
    true
}

impl Default for IcfSection {
    fn default() -> Self {
        IcfSection {
            directions: default_directions(),
            radii: default_radii(),
            guide: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Fill the runtime column; off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            timing: false,
        }
    }
}

/// Box `[lo, hi]` per axis on which errors are measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub game: GameKind,
    /// Decreasing ε values; may be empty.
    pub schedule: Vec<f64>,
    pub grid: GridSection,
    pub time: TimeSection,
    pub problem: ProblemSection,
    #[serde(default = "yes")]
    pub oracle: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub probe: Option<ProbeSection>,
    #[serde(default)]
    pub icf: IcfSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses and validates, resolving every name.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Config(format!("schedule must be strictly decreasing, got {:?}", self.schedule)));
            }
        }
        if let Some(e) = self.schedule.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("every eps must lie in (0,1), got {e}")));
        }
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            return Err(Error::Config(format!("grid dim must be 1 or 2, got {}", g.dim)));
        }
        if !(g.hi > g.lo) || !g.lo.is_finite() || !g.hi.is_finite() {
            return Err(Error::Config(format!("grid needs lo < hi, got [{}, {}]", g.lo, g.hi)));
        }
        match (g.n, g.h_over_eps) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Config("grid needs exactly one of `n` and `h_over_eps`".into()));
            }
            (Some(n), None) if !(3..=100_000).contains(&n) => {
                return Err(Error::Config(format!("grid n must lie in [3, 100000], got {n}")));
            }
            (None, Some(r)) if !(r > 0.0 && r <= 1.0) => {
                return Err(Error::Config(format!("h_over_eps must lie in (0, 1], got {r}")));
            }
            _ => {}
        }
        let t = &self.time;
        if !(t.t_final.is_finite() && t.probe >= 0.0 && t.probe <= t.t_final) {
            return Err(Error::Config(format!("time probe must lie in [0, t_final], got {} with t_final {}", t.probe, t.t_final)));
        }
        if !(t.dt_over_eps2 > 0.0 && t.dt_over_eps2 <= 0.25) {
            return Err(Error::Config(format!("dt_over_eps2 must lie in (0, 1/4], got {}", t.dt_over_eps2)));
        }
        if let Some(p) = &self.probe {
            if !(p.hi >= p.lo) {
                return Err(Error::Config(format!("probe needs lo ≤ hi, got [{}, {}]", p.lo, p.hi)));
            }
        }
        let p = &self.problem;
        terminal_by_name(&p.terminal)?;
        let need = |v: &Option<String>, what: &str| {
            v.clone().ok_or_else(|| Error::Config(format!("{:?} game needs problem.{what}", self.game)))
        };
        match self.game {
            GameKind::Eikonal => {
                speed_by_name(&need(&p.speed, "speed")?)?;
            }
            GameKind::Icf => {
                kernel_by_name(&need(&p.kernel, "kernel")?, g.dim)?;
                if g.dim == 2 && self.icf.directions == 0 {
                    return Err(Error::Config("icf.directions must be positive".into()));
                }
                if self.icf.radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(Error::Config("icf.radii must be positive".into()));
                }
            }
            GameKind::Pide => {
                measure_by_name(&need(&p.measure, "measure")?, g.dim, p.trunc_r)?;
                let f = nonlinearity_by_name(&need(&p.nonlinearity, "nonlinearity")?)?;
                let top = 1.0 / f.growth_exponent();
                if !(p.alpha > 0.0 && p.alpha < top) {
                    return Err(Error::Config(format!("alpha must lie in (0, {top}) for {}, got {}", f.name, p.alpha)));
                }
            }
        }
        Ok(())
    }

    /// Grid for one ε of the schedule.
    pub fn grid_for(&self, eps: f64) -> Result<Grid> {
        let g = &self.grid;
        let n = match (g.n, g.h_over_eps) {
            (Some(n), _) => n,
            (None, Some(r)) => {
                let n = ((g.hi - g.lo) / (r * eps)).ceil() as usize + 1;
                if n > 100_000 {
                    return Err(Error::Config(format!("grid for eps={eps} would need {n} nodes per axis")));
                }
                n
            }
            (None, None) => return Err(Error::Config("grid needs `n` or `h_over_eps`".into())),
        };
        if g.dim == 1 {
            Grid::line(g.lo, g.hi, n)
        } else {
            Grid::square(g.lo, g.hi, n)
        }
    }

    /// Whether a node lies in the probe region (everywhere if none is set).
    pub fn in_probe(&self, x: Point, dim: usize) -> bool {
        match &self.probe {
            None => true,
            Some(p) => (0..dim).all(|a| x[a] >= p.lo - 1e-12 && x[a] <= p.hi + 1e-12),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = r#"
name = "eikonal-const"
game = "eikonal"
schedule = [0.1, 0.05, 0.025]

[grid]
dim = 1
lo = -1.0
hi = 1.0
h_over_eps = 0.25

[time]
t_final = 1.0
probe = 0.5

[problem]
terminal = "plateau(0.2)"
speed = "const(1)"
"#;

    #[test]
    fn parses_calls() {
        assert_eq!(parse_call("linear").unwrap(), ("linear".into(), vec![]));
        assert_eq!(parse_call(" power(0.5, 1) ").unwrap(), ("power".into(), vec![0.5, 1.0]));
        assert_eq!(parse_call("truncated-power(1.5,2)").unwrap().1, vec![1.5, 2.0]);
        for bad in ["", "power(0.5", "power(x)", "a b", "f((1))", "f(nan)", "f(inf)"] {
            assert!(parse_call(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn registries_resolve_and_reject() {
        assert_eq!(speed_by_name("const(-2)").unwrap().at([0.3, 0.0]), -2.0);
        assert!(speed_by_name("two_zone").is_ok());
        assert_eq!(kernel_by_name("power(0.5, 1)", 2).unwrap().support_r, 1.0);
        assert!(measure_by_name("uniform", 1, 1.0).is_ok());
        assert!(measure_by_name("truncated-power(0.5, 2)", 1, 1.0).is_ok());
        assert!(nonlinearity_by_name("advection(1)").is_ok());
        let err = kernel_by_name("gauss(1)", 2).unwrap_err();
        assert!(matches!(err, Error::UnknownName { registry: "kernel", .. }));
        assert!(err.to_string().contains("kernel") && err.to_string().contains("gauss"));
        assert!(matches!(speed_by_name("const"), Err(Error::Input(_))));
        assert!(matches!(terminal_by_name("wave(1)"), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn terminal_examples() {
        let p = terminal_by_name("plateau(0.2)").unwrap();
        assert_eq!(p.at([0.1, 0.0]), 0.0);
        assert!((p.at([-0.5, 0.0]) + 0.3).abs() < 1e-15);
        assert_eq!(terminal_by_name("cone(0.5)").unwrap().at([0.3, 0.4]), 0.0);
        let b = terminal_by_name("bump(0.5)").unwrap();
        assert_eq!(b.at([0.0, 0.0]), 1.0);
        assert_eq!(b.at([0.6, 0.0]), 0.0);
    }

    #[test]
    fn sample_config_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.game, GameKind::Eikonal);
        assert_eq!(cfg.grid_for(0.1).unwrap().n[0], 81);
        assert!(!cfg.output.timing && cfg.oracle);
        let again = ExperimentConfig::from_toml_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_order = SAMPLE.replace("[0.1, 0.05, 0.025]", "[0.05, 0.1]");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad_order), Err(Error::Config(_))));
        let empty = SAMPLE.replace("[0.1, 0.05, 0.025]", "[]");
        assert!(ExperimentConfig::from_toml_str(&empty).unwrap().schedule.is_empty());
        let unknown = SAMPLE.replace("const(1)", "sonic(1)");
        assert!(matches!(ExperimentConfig::from_toml_str(&unknown), Err(Error::UnknownName { .. })));
        let extra = format!("{SAMPLE}\nsurprise = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&extra), Err(Error::Toml(_))));
        let no_speed = SAMPLE.replace("speed = \"const(1)\"", "");
        assert!(matches!(ExperimentConfig::from_toml_str(&no_speed), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn parse_call_never_panics(s in "\\PC{0,40}") {
            let _ = parse_call(&s);
            let _ = ExperimentConfig::from_toml_str(&s);
        }

        #[test]
        fn parse_call_reads_what_it_prints(name in "[a-z_]{1,8}", args in proptest::collection::vec(-1e6..1e6f64, 0..4)) {
            let text = if args.is_empty() { name.clone() } else {
                format!("{name}({})", args.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(", "))
            };
            let (n, a) = parse_call(&text).unwrap();
            prop_assert_eq!(n, name);
            prop_assert_eq!(a, args);
        }
    }
}
