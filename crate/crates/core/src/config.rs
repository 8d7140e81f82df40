//! Run configuration.
//!
//! A config is a TOML document with the sections below; unknown sections and
//! keys are rejected.
//!
//! ```toml
//! [grid]
//! nx = 500
//! ny = 250
//! # mask = "bracket.mask"      # optional, relative to the config file
//!
//! [material]                   # all optional
//! E0 = 1.0
//! Emin = 1e-6                  # default 1e-6 * E0
//! nu = 0.3
//! gamma = 3.0
//!
//! [[support]]                  # at least one
//! at = "left"
//! fix = "xy"                   # x, y or xy
//!
//! [[load]]                     # at least one; force applied at every selected node
//! at = "right-mid"
//! force = [0.0, -1.0]
//!
//! [optimization]
//! alpha = 0.6                  # or { left = 0.4, right = 0.7 } for a linear ramp in x
//! alpha_total = 0.4            # optional global volume bound
//! R = 18.0                     # local volume radius, constant or ramp
//! r = 4.5                      # filter radius, must be < R
//! p = 16.0
//! beta_initial = 1.0
//! beta_period = 40
//! beta_max = 128.0
//! move_limit = 0.01
//! max_iterations = 1000
//! init = "topo"                # or "uniform"
//!
//! [mma]                        # optional: a0, c, d, asy_init, asy_incr, asy_decr,
//!                              # albefa, raa0, kkt_tolerance, max_newton
//!
//! [topology]                   # optional
//! step = 0.5
//! seed_offset = 1.0
//! stop_radius = 0.5
//! max_steps = 100000
//! include_wedges = false
//!
//! [run]                        # optional
//! out = "runs/cantilever"
//! snapshot_period = 0          # 0 writes only the initial and final fields
//! single_thread = false
//! seed = 0
//! solver = "direct"            # or "cg"
//! cg_max_iterations = 20000
//! ```
//!
//! Node selectors: `left`, `right`, `top`, `bottom` (whole edges),
//! `top-left`, `top-right`, `bottom-left`, `bottom-right`, `left-mid`,
//! `right-mid`, `top-mid`, `bottom-mid`, `center`, `node I J` and
//! `rect I0 J0 I1 J1` (all nodes in the lattice rectangle). Midpoints of an
//! odd number of elements round down. Only nodes touching an active element
//! are selected.

use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::fem::{MaterialModel, SolverKind};
use crate::grid::{build_parameter_field, BoundaryConditions, CartesianGrid, Dir, FieldRole, NodalLoad, ParameterSpec};
use crate::mma::MmaParams;
use crate::optimizer::{BetaSchedule, InitMode, OptimizationConfig};
use crate::topology::{SkeletonOptions, TraceOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Top => "top",
            Side::Bottom => "bottom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Edge(Side),
    /// Corner between a vertical and a horizontal side.
    Corner(Side, Side),
    Midpoint(Side),
    Center,
    Node { i: usize, j: usize },
    Rect { i0: usize, j0: usize, i1: usize, j1: usize },
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let side = |w: &str| match w {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            "top" => Some(Side::Top),
            "bottom" => Some(Side::Bottom),
            _ => None,
        };
        let ints = |ws: &[&str]| -> std::result::Result<Vec<usize>, String> {
            ws.iter()
                .map(|w| w.parse::<usize>().map_err(|_| format!("'{w}' is not a node index")))
                .collect()
        };
        match words.as_slice() {
            ["center"] => Ok(Selector::Center),
            ["node", rest @ ..] if rest.len() == 2 => {
                let v = ints(rest)?;
                Ok(Selector::Node { i: v[0], j: v[1] })
            }
            ["rect", rest @ ..] if rest.len() == 4 => {
                let v = ints(rest)?;
                if v[0] > v[2] || v[1] > v[3] {
                    return Err(format!("empty node rectangle '{s}'"));
                }
                Ok(Selector::Rect { i0: v[0], j0: v[1], i1: v[2], j1: v[3] })
            }
            [one] => {
                if let Some(sd) = side(one) {
                    return Ok(Selector::Edge(sd));
                }
                if let Some(sd) = one.strip_suffix("-mid").and_then(side) {
                    return Ok(Selector::Midpoint(sd));
                }
                match one.split_once('-').map(|(a, b)| (side(a), side(b))) {
                    Some((Some(v @ (Side::Top | Side::Bottom)), Some(h @ (Side::Left | Side::Right)))) => {
                        Ok(Selector::Corner(h, v))
                    }
                    _ => Err(format!("unknown node selector '{s}'")),
                }
            }
            _ => Err(format!("unknown node selector '{s}'")),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Selector::Edge(s) => f.write_str(s.name()),
            Selector::Corner(h, v) => write!(f, "{}-{}", v.name(), h.name()),
            Selector::Midpoint(s) => write!(f, "{}-mid", s.name()),
            Selector::Center => f.write_str("center"),
            Selector::Node { i, j } => write!(f, "node {i} {j}"),
            Selector::Rect { i0, j0, i1, j1 } => write!(f, "rect {i0} {j0} {i1} {j1}"),
        }
    }
}

impl Selector {
    /// Attached lattice nodes picked by this selector, in lattice order.
    pub fn nodes(&self, grid: &CartesianGrid) -> Vec<usize> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let coord = |s: Side| match s {
            Side::Left | Side::Bottom => 0,
            Side::Right => nx,
            Side::Top => ny,
        };
        let (i_range, j_range) = match *self {
            Selector::Edge(s @ (Side::Left | Side::Right)) => (coord(s)..=coord(s), 0..=ny),
            Selector::Edge(s) => (0..=nx, coord(s)..=coord(s)),
            Selector::Corner(h, v) => (coord(h)..=coord(h), coord(v)..=coord(v)),
            Selector::Midpoint(s @ (Side::Left | Side::Right)) => (coord(s)..=coord(s), ny / 2..=ny / 2),
            Selector::Midpoint(s) => (nx / 2..=nx / 2, coord(s)..=coord(s)),
            Selector::Center => (nx / 2..=nx / 2, ny / 2..=ny / 2),
            Selector::Node { i, j } => (i..=i, j..=j),
            Selector::Rect { i0, j0, i1, j1 } => (i0..=i1.min(nx), j0..=j1.min(ny)),
        };
        let mut out = Vec::new();
        for j in j_range {
            for i in i_range.clone() {
                if i <= nx && j <= ny {
                    let n = grid.node_index(i, j);
                    if grid.node_is_attached(n) {
                        out.push(n);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSet {
    X,
    Y,
    XY,
}

impl DofSet {
    pub fn dirs(self) -> &'static [Dir] {
        match self {
            DofSet::X => &[Dir::X],
            DofSet::Y => &[Dir::Y],
            DofSet::XY => &[Dir::X, Dir::Y],
        }
    }

    fn name(self) -> &'static str {
        match self {
            DofSet::X => "x",
            DofSet::Y => "y",
            DofSet::XY => "xy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub at: Selector,
    pub dofs: DofSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Load {
    pub at: Selector,
    pub force: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSpec {
    pub alpha: ParameterSpec,
    pub alpha_total: Option<f64>,
    pub radius: ParameterSpec,
    pub filter_radius: f64,
    pub p: f64,
    pub beta: BetaSchedule,
    pub move_limit: f64,
    pub max_iterations: usize,
    pub init: InitMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub out: Option<PathBuf>,
    /// Write a density snapshot every this many iterations; 0 disables.
    pub snapshot_period: usize,
    pub single_thread: bool,
    /// Reserved; no part of the pipeline is randomized.
    pub seed: u64,
    pub solver: SolverKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub material: MaterialModel,
    pub supports: Vec<Support>,
    pub loads: Vec<Load>,
    pub optimization: OptimizationSpec,
    /// `mma.move_limit` mirrors `optimization.move_limit`.
    pub mma: MmaParams,
    pub topology: SkeletonOptions,
    pub run: RunSettings,
}

impl RunConfig {
    pub fn boundary_conditions(&self, grid: &CartesianGrid) -> Result<BoundaryConditions> {
        let mut bc = BoundaryConditions::default();
        for s in &self.supports {
            let nodes = s.at.nodes(grid);
            if nodes.is_empty() {
                return Err(Error::Boundary(format!("support selector '{}' matches no node", s.at)));
            }
            for n in nodes {
                for &d in s.dofs.dirs() {
                    if !bc.fixed.contains(&(n, d)) {
                        bc.fixed.push((n, d));
                    }
                }
            }
        }
        for l in &self.loads {
            let nodes = l.at.nodes(grid);
            if nodes.is_empty() {
                return Err(Error::Boundary(format!("load selector '{}' matches no node", l.at)));
            }
            bc.loads.extend(nodes.into_iter().map(|node| NodalLoad {
                node,
                fx: l.force[0],
                fy: l.force[1],
            }));
        }
        bc.validate(grid)?;
        Ok(bc)
    }

    pub fn optimization_config(&self, grid: &CartesianGrid) -> Result<OptimizationConfig> {
        let o = &self.optimization;
        let mut cfg = OptimizationConfig::new(
            build_parameter_field(grid, o.alpha, FieldRole::Fraction)?,
            build_parameter_field(grid, o.radius, FieldRole::Positive)?,
            o.filter_radius,
        );
        cfg.alpha_total = o.alpha_total;
        cfg.p = o.p;
        cfg.beta = o.beta;
        cfg.max_iterations = o.max_iterations;
        cfg.material = self.material;
        cfg.solver = self.run.solver;
        cfg.mma = MmaParams {
            move_limit: o.move_limit,
            ..self.mma
        };
        cfg.validate(grid)?;
        Ok(cfg)
    }

    /// Canonical TOML rendering with every default spelled out; parsing it
    /// gives back an identical config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let q = |text: &str| toml::Value::String(text.to_owned()).to_string();
        let spec = |p: &ParameterSpec| match *p {
            ParameterSpec::Constant(v) => format!("{v:?}"),
            ParameterSpec::RampX { left, right } => format!("{{ left = {left:?}, right = {right:?} }}"),
        };
        let g = &self.grid;
        let _ = writeln!(s, "[grid]\nnx = {}\nny = {}", g.nx, g.ny);
        if let Some(m) = &g.mask {
            let _ = writeln!(s, "mask = {}", q(&m.to_string_lossy()));
        }
        let m = &self.material;
        let _ = writeln!(
            s,
            "\n[material]\nE0 = {:?}\nEmin = {:?}\nnu = {:?}\ngamma = {:?}",
            m.e0, m.emin, m.nu, m.penal
        );
        for sup in &self.supports {
            let _ = writeln!(s, "\n[[support]]\nat = {}\nfix = {}", q(&sup.at.to_string()), q(sup.dofs.name()));
        }
        for l in &self.loads {
            let _ = writeln!(
                s,
                "\n[[load]]\nat = {}\nforce = [{:?}, {:?}]",
                q(&l.at.to_string()),
                l.force[0],
                l.force[1]
            );
        }
        let o = &self.optimization;
        let _ = writeln!(s, "\n[optimization]\nalpha = {}", spec(&o.alpha));
        if let Some(a) = o.alpha_total {
            let _ = writeln!(s, "alpha_total = {a:?}");
        }
        let _ = writeln!(
            s,
            "R = {}\nr = {:?}\np = {:?}\nbeta_initial = {:?}\nbeta_period = {}\nbeta_max = {:?}\nmove_limit = {:?}\nmax_iterations = {}\ninit = {}",
            spec(&o.radius),
            o.filter_radius,
            o.p,
            o.beta.initial,
            o.beta.period,
            o.beta.max,
            o.move_limit,
            o.max_iterations,
            q(o.init.name())
        );
        let a = &self.mma;
        let _ = writeln!(
            s,
            "\n[mma]\na0 = {:?}\nc = {:?}\nd = {:?}\nasy_init = {:?}\nasy_incr = {:?}\nasy_decr = {:?}\nalbefa = {:?}\nraa0 = {:?}\nkkt_tolerance = {:?}\nmax_newton = {}",
            a.a0, a.c, a.d, a.asy_init, a.asy_incr, a.asy_decr, a.albefa, a.raa0, a.kkt_tolerance, a.max_newton
        );
        let t = &self.topology;
        let _ = writeln!(
            s,
            "\n[topology]\nstep = {:?}\nseed_offset = {:?}\nstop_radius = {:?}\nmax_steps = {}\nloop_min_steps = {}\ninclude_wedges = {}",
            t.trace.step, t.seed_offset, t.trace.stop_radius, t.trace.max_steps, t.trace.loop_min_steps, t.include_wedges
        );
        let r = &self.run;
        let _ = writeln!(s, "\n[run]");
        if let Some(out) = &r.out {
            let _ = writeln!(s, "out = {}", q(&out.to_string_lossy()));
        }
        let _ = writeln!(
            s,
            "snapshot_period = {}\nsingle_thread = {}\nseed = {}\nsolver = {}",
            r.snapshot_period,
            r.single_thread,
            r.seed,
            q(r.solver.name())
        );
        if let SolverKind::ConjugateGradient { max_iterations } = r.solver {
            let _ = writeln!(s, "cg_max_iterations = {max_iterations}");
        }
        s
    }
}

// Raw document layout as deserialized, before validation.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Option<RawGrid>,
    material: Option<RawMaterial>,
    #[serde(default)]
    support: Vec<RawSupport>,
    #[serde(default)]
    load: Vec<RawLoad>,
    optimization: Option<RawOptimization>,
    mma: Option<RawMma>,
    topology: Option<RawTopology>,
    run: Option<RawRun>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Spanned<i64>,
    ny: Spanned<i64>,
    mask: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    #[serde(rename = "E0")]
    e0: Option<Spanned<f64>>,
    #[serde(rename = "Emin")]
    emin: Option<Spanned<f64>>,
    nu: Option<Spanned<f64>>,
    gamma: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSupport {
    at: Spanned<String>,
    fix: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    at: Spanned<String>,
    force: Spanned<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSpec {
    Constant(f64),
    Ramp(RawRamp),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRamp {
    left: f64,
    right: f64,
}

impl RawSpec {
    fn spec(&self) -> ParameterSpec {
        match *self {
            RawSpec::Constant(v) => ParameterSpec::Constant(v),
            RawSpec::Ramp(RawRamp { left, right }) => ParameterSpec::RampX { left, right },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimization {
    alpha: Option<Spanned<RawSpec>>,
    alpha_total: Option<Spanned<f64>>,
    #[serde(rename = "R")]
    radius: Option<Spanned<RawSpec>>,
    r: Option<Spanned<f64>>,
    p: Option<Spanned<f64>>,
    beta_initial: Option<Spanned<f64>>,
    beta_period: Option<Spanned<i64>>,
    beta_max: Option<Spanned<f64>>,
    move_limit: Option<Spanned<f64>>,
    max_iterations: Option<Spanned<i64>>,
    init: Option<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMma {
    a0: Option<Spanned<f64>>,
    c: Option<Spanned<f64>>,
    d: Option<Spanned<f64>>,
    asy_init: Option<Spanned<f64>>,
    asy_incr: Option<Spanned<f64>>,
    asy_decr: Option<Spanned<f64>>,
    albefa: Option<Spanned<f64>>,
    raa0: Option<Spanned<f64>>,
    kkt_tolerance: Option<Spanned<f64>>,
    max_newton: Option<Spanned<i64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    step: Option<Spanned<f64>>,
    seed_offset: Option<Spanned<f64>>,
    stop_radius: Option<Spanned<f64>>,
    max_steps: Option<Spanned<i64>>,
    loop_min_steps: Option<Spanned<i64>>,
    include_wedges: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    out: Option<String>,
    snapshot_period: Option<Spanned<i64>>,
    single_thread: Option<bool>,
    seed: Option<Spanned<i64>>,
    solver: Option<Spanned<String>>,
    cg_max_iterations: Option<Spanned<i64>>,
}

/// Maps byte spans to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, span: Range<usize>, msg: impl Into<String>) -> Result<T> {
        Err(Error::config(self.of(span), msg))
    }

    /// Value of an optional field, checked with `ok`, or the default.
    fn num<T: Copy>(&self, v: &Option<Spanned<T>>, default: T, ok: impl Fn(T) -> bool, rule: &str) -> Result<T> {
        match v {
            None => Ok(default),
            Some(s) if ok(*s.get_ref()) => Ok(*s.get_ref()),
            Some(s) => self.err(s.span(), rule),
        }
    }

    fn count(&self, v: &Option<Spanned<i64>>, default: usize, min: i64, name: &str) -> Result<usize> {
        let v = self.num(v, default as i64, |x| x >= min, &format!("{name} must be an integer >= {min}"))?;
        Ok(v as usize)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| Lines(text).of(s)).unwrap_or(0);
        Error::config(line, e.message().trim().to_owned())
    })?;
    let lines = Lines(text);

    let grid = raw.grid.ok_or_else(|| Error::config(0, "missing [grid] section"))?;
    let dim = |v: &Spanned<i64>, name: &str| -> Result<usize> {
        if *v.get_ref() >= 1 && *v.get_ref() <= 1 << 20 {
            Ok(*v.get_ref() as usize)
        } else {
            lines.err(v.span(), format!("{name} must be a positive element count, got {}", v.get_ref()))
        }
    };
    let grid = GridSpec {
        nx: dim(&grid.nx, "nx")?,
        ny: dim(&grid.ny, "ny")?,
        mask: grid.mask.map(PathBuf::from),
    };

    let defaults = MaterialModel::default();
    let material = match raw.material {
        None => defaults,
        Some(m) => {
            let e0 = lines.num(&m.e0, defaults.e0, |v| v > 0.0 && v.is_finite(), "E0 must be positive")?;
            MaterialModel {
                e0,
                emin: lines.num(&m.emin, 1e-6 * e0, |v| v > 0.0 && v < e0, "Emin must lie in (0, E0)")?,
                nu: lines.num(&m.nu, defaults.nu, |v| v > -1.0 && v < 0.5, "nu must lie in (-1, 0.5)")?,
                penal: lines.num(&m.gamma, defaults.penal, |v| (1.0..=20.0).contains(&v), "gamma must lie in [1, 20]")?,
            }
        }
    };

    if raw.support.is_empty() {
        return Err(Error::config(0, "missing [[support]] section: at least one support is required"));
    }
    let mut supports = Vec::new();
    for s in &raw.support {
        let at = s.at.get_ref().parse().or_else(|e| lines.err(s.at.span(), e))?;
        let dofs = match s.fix.get_ref().as_str() {
            "x" => DofSet::X,
            "y" => DofSet::Y,
            "xy" => DofSet::XY,
            other => return lines.err(s.fix.span(), format!("fix must be x, y or xy, got '{other}'")),
        };
        supports.push(Support { at, dofs });
    }
    if raw.load.is_empty() {
        return Err(Error::config(0, "missing [[load]] section: at least one load is required"));
    }
    let mut loads = Vec::new();
    for l in &raw.load {
        let at = l.at.get_ref().parse().or_else(|e| lines.err(l.at.span(), e))?;
        let f = l.force.get_ref();
        if f.len() != 2 || !f.iter().all(|v| v.is_finite()) {
            return lines.err(l.force.span(), "force must be two finite numbers [fx, fy]");
        }
        loads.push(Load { at, force: [f[0], f[1]] });
    }

    let o = raw.optimization.ok_or_else(|| Error::config(0, "missing [optimization] section"))?;
    let alpha = o.alpha.as_ref().ok_or_else(|| Error::config(0, "[optimization] needs alpha"))?;
    let radius = o.radius.as_ref().ok_or_else(|| Error::config(0, "[optimization] needs R"))?;
    let r = o.r.as_ref().ok_or_else(|| Error::config(0, "[optimization] needs r"))?;
    let alpha_spec = alpha.get_ref().spec();
    if !(alpha_spec.min() > 0.0 && alpha_spec.max() < 1.0) {
        return lines.err(alpha.span(), "alpha must lie in (0, 1)");
    }
    let radius_spec = radius.get_ref().spec();
    if !(radius_spec.min() > 0.0 && radius_spec.max().is_finite()) {
        return lines.err(radius.span(), "R must be positive");
    }
    let filter_radius = *r.get_ref();
    if !(filter_radius > 0.0) {
        return lines.err(r.span(), "r must be positive");
    }
    if filter_radius >= radius_spec.min() {
        return lines.err(
            r.span(),
            format!(
                "filter radius r = {filter_radius} violates r < R (smallest R is {})",
                radius_spec.min()
            ),
        );
    }
    let beta_defaults = BetaSchedule::default();
    let beta = BetaSchedule {
        initial: lines.num(&o.beta_initial, beta_defaults.initial, |v| v > 0.0 && v.is_finite(), "beta_initial must be positive")?,
        period: lines.count(&o.beta_period, beta_defaults.period, 1, "beta_period")?,
        max: lines.num(&o.beta_max, beta_defaults.max, |v| v.is_finite() && v > 0.0, "beta_max must be positive")?,
    };
    if beta.max < beta.initial {
        let span = o.beta_max.as_ref().map(|s| s.span()).unwrap_or(0..0);
        return Err(Error::config(lines.of(span), "beta_max must be >= beta_initial"));
    }
    let init = match &o.init {
        None => InitMode::Topology,
        Some(s) => s.get_ref().parse().or_else(|e| lines.err(s.span(), e))?,
    };
    let optimization = OptimizationSpec {
        alpha: alpha_spec,
        alpha_total: match &o.alpha_total {
            None => None,
            Some(a) => Some(lines.num(&Some(a.clone()), 0.5, |v| v > 0.0 && v < 1.0, "alpha_total must lie in (0, 1)")?),
        },
        radius: radius_spec,
        filter_radius,
        p: lines.num(&o.p, 16.0, |v| (1.0..=1e3).contains(&v), "p must lie in [1, 1000]")?,
        beta,
        move_limit: lines.num(&o.move_limit, 0.01, |v| v > 0.0 && v <= 1.0, "move_limit must lie in (0, 1]")?,
        max_iterations: lines.count(&o.max_iterations, 1000, 0, "max_iterations")?,
        init,
    };

    let md = MmaParams::default();
    let mma = match raw.mma {
        None => md,
        Some(m) => {
            let pos = |v: f64| v > 0.0 && v.is_finite();
            MmaParams {
                a0: lines.num(&m.a0, md.a0, pos, "a0 must be positive")?,
                c: lines.num(&m.c, md.c, pos, "c must be positive")?,
                d: lines.num(&m.d, md.d, pos, "d must be positive")?,
                asy_init: lines.num(&m.asy_init, md.asy_init, |v| v > 0.0 && v <= 1.0, "asy_init must lie in (0, 1]")?,
                asy_incr: lines.num(&m.asy_incr, md.asy_incr, |v| (1.0..=10.0).contains(&v), "asy_incr must lie in [1, 10]")?,
                asy_decr: lines.num(&m.asy_decr, md.asy_decr, |v| v > 0.0 && v <= 1.0, "asy_decr must lie in (0, 1]")?,
                albefa: lines.num(&m.albefa, md.albefa, |v| v > 0.0 && v < 1.0, "albefa must lie in (0, 1)")?,
                raa0: lines.num(&m.raa0, md.raa0, pos, "raa0 must be positive")?,
                kkt_tolerance: lines.num(&m.kkt_tolerance, md.kkt_tolerance, pos, "kkt_tolerance must be positive")?,
                max_newton: lines.count(&m.max_newton, md.max_newton, 1, "max_newton")?,
                move_limit: md.move_limit,
            }
        }
    };
    let mma = MmaParams {
        move_limit: optimization.move_limit,
        ..mma
    };

    let sd = SkeletonOptions::default();
    let topology = match raw.topology {
        None => sd,
        Some(t) => SkeletonOptions {
            include_wedges: t.include_wedges.unwrap_or(sd.include_wedges),
            seed_offset: lines.num(&t.seed_offset, sd.seed_offset, |v| v > 0.0 && v.is_finite(), "seed_offset must be positive")?,
            trace: TraceOptions {
                step: lines.num(&t.step, sd.trace.step, |v| v > 0.0 && v.is_finite(), "step must be positive")?,
                stop_radius: lines.num(&t.stop_radius, sd.trace.stop_radius, |v| v >= 0.0 && v.is_finite(), "stop_radius must be >= 0")?,
                max_steps: lines.count(&t.max_steps, sd.trace.max_steps, 1, "max_steps")?,
                loop_min_steps: lines.count(&t.loop_min_steps, sd.trace.loop_min_steps, 2, "loop_min_steps")?,
            },
        },
    };

    let run = match raw.run {
        None => RunSettings {
            out: None,
            snapshot_period: 0,
            single_thread: false,
            seed: 0,
            solver: SolverKind::Direct,
        },
        Some(r) => {
            let cg_iters = lines.count(&r.cg_max_iterations, 20_000, 1, "cg_max_iterations")?;
            let solver = match &r.solver {
                None => SolverKind::Direct,
                Some(s) => match s.get_ref().as_str() {
                    "direct" => SolverKind::Direct,
                    "cg" => SolverKind::ConjugateGradient { max_iterations: cg_iters },
                    other => return lines.err(s.span(), format!("solver must be direct or cg, got '{other}'")),
                },
            };
            RunSettings {
                out: r.out.map(PathBuf::from),
                snapshot_period: lines.count(&r.snapshot_period, 0, 0, "snapshot_period")?,
                single_thread: r.single_thread.unwrap_or(false),
                seed: lines.count(&r.seed, 0, 0, "seed")? as u64,
                solver,
            }
        }
    };

    Ok(RunConfig {
        grid,
        material,
        supports,
        loads,
        optimization,
        mma,
        topology,
        run,
    })
}

/// Read and parse a config file; a relative mask path is resolved against
/// the config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(mask) = &cfg.grid.mask {
        if mask.is_relative() {
            let dir = path.parent().unwrap_or(Path::new("."));
            let dir = std::path::absolute(dir).map_err(|e| Error::io(dir, e))?;
            cfg.grid.mask = Some(dir.join(mask));
        }
    }
    Ok(cfg)
}
