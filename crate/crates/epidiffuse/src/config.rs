//! `key = value` scenario files.
//!
//! One assignment per line, `#` starts a comment, dotted keys group related
//! settings (`params.a = 1.0`). Every key is known in advance; unknown,
//! duplicate or misplaced keys are rejected with the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use epidiffuse_core::constants::{ConstantsOverride, DerivedConstants};
use epidiffuse_core::grid::{extrema, Field, Grid};
use epidiffuse_core::model::{
    validate_hypotheses, FieldInit, Forcing, Hypothesis, HypothesisReport, InitialData,
    ModelParams, Nonlinearity,
};
use epidiffuse_core::monitor;
use epidiffuse_core::solver::{self, SolverPath, DEFAULT_SAFETY};
use thiserror::Error;

/// Default number of monitor samples per run when `control.output_every` is absent.
pub const DEFAULT_SAMPLE_COUNT: u64 = 1000;

const KNOWN_KEYS: &[&str] = &[
    "params.a",
    "params.b",
    "params.d",
    "params.Lambda",
    "params.mu",
    "params.lambda_hat",
    "params.strict_mode",
    "forcing.kind",
    "forcing.value",
    "forcing.breakpoints",
    "forcing.values",
    "forcing.mean",
    "forcing.amplitude",
    "forcing.period",
    "nonlinearity.kind",
    "nonlinearity.m",
    "nonlinearity.alpha",
    "initial.u0",
    "initial.v0",
    "grid.extent",
    "grid.cells",
    "control.dt",
    "control.safety",
    "control.t_end",
    "control.output_every",
    "control.snapshot_every",
    "control.path",
    "constants.delta",
    "constants.epsilon",
    "monitor.c_tol",
    "monitor.invariant_tol",
    "monitor.envelope_tol",
    "monitor.track_j_w",
    "output_dir",
    "seed",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate {
        line: usize,
        key: String,
        first: usize,
    },
    #[error("line {line}: missing required key `{key}` (end of file)")]
    Missing { line: usize, key: &'static str },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    Value {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("line {line}: `{key}` is not used when {context}")]
    Unused {
        line: usize,
        key: String,
        context: String,
    },
    #[error(
        "line {line}: {label} fails: {detail} (value {value}, bound {bound}); \
         set params.strict_mode = false or pass --relaxed to run anyway"
    )]
    Hypothesis {
        line: usize,
        label: &'static str,
        detail: String,
        value: f64,
        bound: f64,
    },
    #[error("line {line}: control.dt = {dt} exceeds the stable step {stable} for the {path} path")]
    Unstable {
        line: usize,
        dt: f64,
        stable: f64,
        path: &'static str,
    },
    #[error("{0}")]
    Model(#[from] epidiffuse_core::Error),
}

/// Grid resolution and physical size as written in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, epidiffuse_core::Error> {
        match (self.extents.as_slice(), self.cells.as_slice()) {
            ([l], [n]) => Grid::line(*l, *n),
            ([lx, ly], [nx, ny]) => Grid::rectangle(*lx, *ly, *nx, *ny),
            _ => Err(epidiffuse_core::Error::Input(
                "grid.extent and grid.cells need 1 or 2 matching entries".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpec {
    /// `None` selects the stable step for the chosen path.
    pub dt: Option<f64>,
    pub safety: f64,
    pub t_end: f64,
    pub output_every: usize,
    /// Write a snapshot every this many samples; 0 writes only the first and last.
    pub snapshot_every: usize,
    pub path: SolverPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSpec {
    pub c_tol: f64,
    pub invariant_tol: f64,
    pub envelope_tol: f64,
    pub track_j_w: bool,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        MonitorSpec {
            c_tol: monitor::DEFAULT_DISSIPATION_C_TOL,
            invariant_tol: monitor::DEFAULT_INVARIANT_TOL,
            envelope_tol: monitor::DEFAULT_ENVELOPE_TOL,
            track_j_w: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: ModelParams,
    pub forcing: Forcing,
    pub nonlinearity: Nonlinearity,
    pub initial: InitialData,
    pub grid: GridSpec,
    pub control: ControlSpec,
    pub constants_override: ConstantsOverride,
    pub monitors: MonitorSpec,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// A parsed and validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: SimulationConfig,
    pub grid: Grid,
    pub u0: Field,
    pub v0: Field,
    pub hypotheses: HypothesisReport,
    pub constants: DerivedConstants,
    /// Step actually requested from the solver.
    pub dt: f64,
    /// `(key, value)` for every setting filled in from a default.
    pub defaulted: Vec<(String, String)>,
}

impl LoadedConfig {
    pub fn scenario(&self) -> solver::Scenario {
        let c = &self.config;
        solver::Scenario {
            system: solver::System {
                params: c.params,
                forcing: c.forcing.clone(),
                nonlinearity: c.nonlinearity,
            },
            u0: self.u0.clone(),
            v0: self.v0.clone(),
            control: solver::StepControl {
                dt: self.dt,
                safety: c.control.safety,
                t_end: c.control.t_end,
                output_every: c.control.output_every,
            },
            path: c.control.path,
            constants: self.constants,
            monitors: solver::MonitorSettings {
                c_tol: c.monitors.c_tol,
                invariant_tol: c.monitors.invariant_tol,
                envelope_tol: c.monitors.envelope_tol,
                track_j_w: c.monitors.track_j_w,
                hypotheses_hold: self.hypotheses.all_pass(),
            },
        }
    }
}

/// Command-line adjustments applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub relaxed: bool,
    pub output_dir: Option<PathBuf>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, overrides)
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
    last_line: usize,
    defaulted: Vec<(String, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, (String, usize)> = BTreeMap::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if let Some((_, first)) = map.get(key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                    first: *first,
                });
            }
            map.insert(key.to_string(), (value.to_string(), line));
        }
        Ok(Entries {
            map,
            last_line,
            defaulted: Vec::new(),
        })
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(self.last_line, |(_, l)| *l)
    }

    fn raw(&self, key: &'static str) -> Result<(&str, usize), ConfigError> {
        self.map
            .get(key)
            .map(|(v, l)| (v.as_str(), *l))
            .ok_or(ConfigError::Missing {
                line: self.last_line,
                key,
            })
    }

    fn value_error(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            line: self.line(key),
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    fn f64(&self, key: &'static str) -> Result<f64, ConfigError> {
        let (v, _) = self.raw(key)?;
        parse_f64(v).ok_or_else(|| self.value_error(key, format!("`{v}` is not a finite number")))
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        if self.map.contains_key(key) {
            self.f64(key)
        } else {
            self.defaulted.push((key.into(), fmt_f64(default)));
            Ok(default)
        }
    }

    fn opt_f64(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        if self.map.contains_key(key) {
            self.f64(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn bool_or(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.map.get(key) {
            None => {
                self.defaulted.push((key.into(), default.to_string()));
                Ok(default)
            }
            Some((v, _)) => v
                .parse()
                .map_err(|_| self.value_error(key, format!("`{v}` is not true/false"))),
        }
    }

    fn u64_or(&mut self, key: &'static str, default: u64) -> Result<u64, ConfigError> {
        match self.map.get(key) {
            None => {
                self.defaulted.push((key.into(), default.to_string()));
                Ok(default)
            }
            Some((v, _)) => v
                .parse()
                .map_err(|_| self.value_error(key, format!("`{v}` is not a nonnegative integer"))),
        }
    }

    fn list_f64(&self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        let (v, _) = self.raw(key)?;
        split_list(v)
            .map(|s| {
                parse_f64(s)
                    .ok_or_else(|| self.value_error(key, format!("`{s}` is not a finite number")))
            })
            .collect()
    }

    fn word(&self, key: &'static str) -> Result<&str, ConfigError> {
        self.raw(key).map(|(v, _)| v)
    }

    /// Rejects keys that only make sense for another variant.
    fn forbid(&self, keys: &[&str], context: &str) -> Result<(), ConfigError> {
        for key in keys {
            if let Some((_, line)) = self.map.get(*key) {
                return Err(ConfigError::Unused {
                    line: *line,
                    key: key.to_string(),
                    context: context.to_string(),
                });
            }
        }
        Ok(())
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_field_init(raw: &str) -> Result<FieldInit, String> {
    if let Some(x) = parse_f64(raw) {
        return Ok(FieldInit::Constant(x));
    }
    let (name, rest) = raw
        .split_once('(')
        .ok_or_else(|| format!("`{raw}` is neither a number nor name(args)"))?;
    let args = rest
        .trim_end()
        .strip_suffix(')')
        .ok_or_else(|| format!("missing `)` in `{raw}`"))?;
    let nums: Vec<f64> = split_list(args)
        .map(|s| parse_f64(s).ok_or_else(|| format!("`{s}` is not a finite number")))
        .collect::<Result<_, _>>()?;
    let mode = |x: f64| -> Result<u32, String> {
        if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as u32)
        } else {
            Err(format!("cosine mode {x} must be a nonnegative integer"))
        }
    };
    match (name.trim(), nums.as_slice()) {
        ("constant", [c]) => Ok(FieldInit::Constant(*c)),
        ("cosine", [mean, amplitude, kx]) => Ok(FieldInit::Cosine {
            mean: *mean,
            amplitude: *amplitude,
            modes: [mode(*kx)?, 0],
        }),
        ("cosine", [mean, amplitude, kx, ky]) => Ok(FieldInit::Cosine {
            mean: *mean,
            amplitude: *amplitude,
            modes: [mode(*kx)?, mode(*ky)?],
        }),
        ("gaussian", [base, amplitude, width, cx]) => Ok(FieldInit::Gaussian {
            base: *base,
            amplitude: *amplitude,
            center: [*cx, 0.0],
            width: *width,
        }),
        ("gaussian", [base, amplitude, width, cx, cy]) => Ok(FieldInit::Gaussian {
            base: *base,
            amplitude: *amplitude,
            center: [*cx, *cy],
            width: *width,
        }),
        ("random", [lo, hi]) => Ok(FieldInit::Random { lo: *lo, hi: *hi }),
        ("values", v) if !v.is_empty() => Ok(FieldInit::Values(v.to_vec())),
        (other, args) => Err(format!(
            "unsupported initial profile `{other}` with {} argument(s); expected constant(c), \
             cosine(mean, amp, kx[, ky]), gaussian(base, amp, width, cx[, cy]), random(lo, hi) \
             or values(...)",
            args.len()
        )),
    }
}

fn write_field_init(init: &FieldInit) -> String {
    let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
    match init {
        FieldInit::Constant(c) => format!("constant({})", fmt_f64(*c)),
        FieldInit::Cosine {
            mean,
            amplitude,
            modes: [kx, ky],
        } => format!(
            "cosine({}, {}, {kx}, {ky})",
            fmt_f64(*mean),
            fmt_f64(*amplitude)
        ),
        FieldInit::Gaussian {
            base,
            amplitude,
            center,
            width,
        } => format!(
            "gaussian({})",
            join(&[*base, *amplitude, *width, center[0], center[1]])
        ),
        FieldInit::Random { lo, hi } => format!("random({}, {})", fmt_f64(*lo), fmt_f64(*hi)),
        FieldInit::Values(v) => format!("values({})", join(v)),
    }
}

/// Parses and validates a scenario.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
    let mut e = Entries::parse(text)?;

    let mut strict = e.bool_or("params.strict_mode", true)?;
    if overrides.relaxed {
        strict = false;
    }
    let params = ModelParams {
        a: e.f64("params.a")?,
        b: e.f64("params.b")?,
        d: e.f64("params.d")?,
        recruitment: e.f64("params.Lambda")?,
        mortality: e.f64("params.mu")?,
        lambda_max: e.f64("params.lambda_hat")?,
        strict,
    };
    if params.lambda_max < 0.0 {
        return Err(e.value_error("params.lambda_hat", "must be nonnegative"));
    }

    let forcing = parse_forcing(&mut e, params.lambda_max)?;
    let nonlinearity = parse_nonlinearity(&mut e)?;

    let initial = InitialData {
        u0: parse_field_init(e.word("initial.u0")?).map_err(|r| e.value_error("initial.u0", r))?,
        v0: parse_field_init(e.word("initial.v0")?).map_err(|r| e.value_error("initial.v0", r))?,
    };

    let cells: Vec<usize> = {
        let (v, _) = e.raw("grid.cells")?;
        split_list(v)
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| e.value_error("grid.cells", format!("`{s}` is not a cell count")))
            })
            .collect::<Result<_, _>>()?
    };
    let extents = if e.map.contains_key("grid.extent") {
        e.list_f64("grid.extent")?
    } else {
        let ext = vec![1.0; cells.len()];
        e.defaulted.push((
            "grid.extent".into(),
            ext.iter()
                .map(|x| fmt_f64(*x))
                .collect::<Vec<_>>()
                .join(", "),
        ));
        ext
    };
    let grid_spec = GridSpec { extents, cells };
    let grid = grid_spec
        .build()
        .map_err(|err| e.value_error("grid.cells", err.to_string()))?;

    let path = match e.map.get("control.path").map(|(v, _)| v.as_str()) {
        None => {
            e.defaulted.push(("control.path".into(), "direct".into()));
            SolverPath::Direct
        }
        Some("direct") => SolverPath::Direct,
        Some("transformed") => SolverPath::Transformed,
        Some(other) => {
            return Err(e.value_error(
                "control.path",
                format!("`{other}` is not direct|transformed"),
            ))
        }
    };
    let safety = e.f64_or("control.safety", DEFAULT_SAFETY)?;
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(e.value_error("control.safety", "must lie in (0, 1]"));
    }
    let t_end = e.f64("control.t_end")?;
    if t_end < 0.0 {
        return Err(e.value_error("control.t_end", "must be nonnegative"));
    }
    let requested_dt = e.opt_f64("control.dt")?;
    let stable = solver::stable_dt(&params, &grid, safety, path);
    let dt = match requested_dt {
        Some(dt) if dt <= 0.0 => return Err(e.value_error("control.dt", "must be positive")),
        Some(dt) => {
            if dt > stable && strict {
                return Err(ConfigError::Unstable {
                    line: e.line("control.dt"),
                    dt,
                    stable,
                    path: path_name(path),
                });
            }
            dt
        }
        None => {
            e.defaulted.push(("control.dt".into(), fmt_f64(stable)));
            stable
        }
    };
    let (n_steps, _) = solver::step_plan(t_end, dt)?;
    let output_every = e.u64_or(
        "control.output_every",
        (n_steps / DEFAULT_SAMPLE_COUNT).max(1),
    )?;
    if output_every == 0 {
        return Err(e.value_error("control.output_every", "must be at least 1"));
    }
    let snapshot_every = e.u64_or("control.snapshot_every", 0)?;

    let constants_override = ConstantsOverride {
        delta: e.opt_f64("constants.delta")?,
        epsilon: e.opt_f64("constants.epsilon")?,
    };
    let defaults = MonitorSpec::default();
    let monitors = MonitorSpec {
        c_tol: e.f64_or("monitor.c_tol", defaults.c_tol)?,
        invariant_tol: e.f64_or("monitor.invariant_tol", defaults.invariant_tol)?,
        envelope_tol: e.f64_or("monitor.envelope_tol", defaults.envelope_tol)?,
        track_j_w: e.bool_or("monitor.track_j_w", defaults.track_j_w)?,
    };
    let seed = e.u64_or("seed", 0)?;
    let output_dir = match (&overrides.output_dir, e.map.get("output_dir")) {
        (Some(dir), _) => dir.clone(),
        (None, Some((v, _))) => PathBuf::from(v),
        (None, None) => {
            e.defaulted.push(("output_dir".into(), "out".into()));
            PathBuf::from("out")
        }
    };

    let config = SimulationConfig {
        params,
        forcing,
        nonlinearity,
        initial,
        grid: grid_spec,
        control: ControlSpec {
            dt: requested_dt,
            safety,
            t_end,
            output_every: output_every as usize,
            snapshot_every: snapshot_every as usize,
            path,
        },
        constants_override,
        monitors,
        output_dir,
        seed,
    };

    let (u0, v0) = {
        let u0 = config
            .initial
            .u0
            .sample(&grid, seed, 0)
            .map_err(|err| e.value_error("initial.u0", err.to_string()))?;
        let v0 = config
            .initial
            .v0
            .sample(&grid, seed, 1)
            .map_err(|err| e.value_error("initial.v0", err.to_string()))?;
        (u0, v0)
    };
    let hypotheses = validate_hypotheses(&params, &nonlinearity, &u0, &v0)?;
    if strict {
        if let Some(failed) = hypotheses.failures().next() {
            let w = failed.witness.clone();
            return Err(ConfigError::Hypothesis {
                line: e.line(hypothesis_key(
                    failed.hypothesis,
                    w.as_ref().map(|w| w.detail.as_str()),
                )),
                label: failed.hypothesis.label(),
                detail: w.as_ref().map_or_else(String::new, |w| w.detail.clone()),
                value: w.as_ref().map_or(f64::NAN, |w| w.value),
                bound: w.as_ref().map_or(f64::NAN, |w| w.bound),
            });
        }
    }

    let (_, u_sup) = extrema(&u0);
    let constants = DerivedConstants::derive(
        &params,
        u_sup.max(0.0),
        grid.measure(),
        config.constants_override,
    )
    .map_err(|err| ConfigError::Value {
        line: e.line("params.mu"),
        key: "params".into(),
        reason: err.to_string(),
    })?;

    Ok(LoadedConfig {
        config,
        grid,
        u0,
        v0,
        hypotheses,
        constants,
        dt,
        defaulted: e.defaulted,
    })
}

fn path_name(path: SolverPath) -> &'static str {
    match path {
        SolverPath::Direct => "direct",
        SolverPath::Transformed => "transformed",
    }
}

fn hypothesis_key(h: Hypothesis, detail: Option<&str>) -> &'static str {
    match h {
        Hypothesis::Structure => match detail {
            Some("a > 0") => "params.a",
            Some("b > 0") => "params.b",
            Some("mu > 0") => "params.mu",
            Some("Lambda >= 0") => "params.Lambda",
            _ => "params.d",
        },
        Hypothesis::Growth => "nonlinearity.kind",
        Hypothesis::InitialBound => "initial.u0",
        Hypothesis::NonnegativeData if detail.is_some_and(|d| d.starts_with("u0")) => "initial.u0",
        Hypothesis::NonnegativeData
        | Hypothesis::InvariantLinePointwise
        | Hypothesis::InvariantLineSupNorm => "initial.v0",
    }
}

fn parse_forcing(e: &mut Entries, lambda_max: f64) -> Result<Forcing, ConfigError> {
    let kind = match e.map.get("forcing.kind") {
        Some((v, _)) => v.clone(),
        None => {
            e.defaulted.push(("forcing.kind".into(), "constant".into()));
            "constant".into()
        }
    };
    let forcing = match kind.as_str() {
        "constant" => {
            e.forbid(
                &[
                    "forcing.breakpoints",
                    "forcing.values",
                    "forcing.mean",
                    "forcing.amplitude",
                    "forcing.period",
                ],
                "forcing.kind = constant",
            )?;
            Forcing::Constant(e.f64_or("forcing.value", lambda_max)?)
        }
        "piecewise_constant" => {
            e.forbid(
                &[
                    "forcing.value",
                    "forcing.mean",
                    "forcing.amplitude",
                    "forcing.period",
                ],
                "forcing.kind = piecewise_constant",
            )?;
            let breakpoints = e.list_f64("forcing.breakpoints")?;
            let values = e.list_f64("forcing.values")?;
            Forcing::piecewise(breakpoints, values)
                .map_err(|err| e.value_error("forcing.values", err.to_string()))?
        }
        "sinusoidal_clamped" => {
            e.forbid(
                &["forcing.value", "forcing.breakpoints", "forcing.values"],
                "forcing.kind = sinusoidal_clamped",
            )?;
            Forcing::Sinusoidal {
                mean: e.f64("forcing.mean")?,
                amplitude: e.f64("forcing.amplitude")?,
                period: e.f64("forcing.period")?,
            }
        }
        other => {
            return Err(e.value_error(
                "forcing.kind",
                format!("`{other}` is not constant|piecewise_constant|sinusoidal_clamped"),
            ))
        }
    };
    forcing
        .check()
        .map_err(|err| e.value_error("forcing.kind", err.to_string()))?;
    Ok(forcing)
}

fn parse_nonlinearity(e: &mut Entries) -> Result<Nonlinearity, ConfigError> {
    let nl = match e.word("nonlinearity.kind")? {
        "product_power" => {
            e.forbid(&["nonlinearity.alpha"], "nonlinearity.kind = product_power")?;
            Nonlinearity::ProductPower {
                m: e.f64_or("nonlinearity.m", 1.0)?,
            }
        }
        "sub_exponential" => {
            e.forbid(&["nonlinearity.m"], "nonlinearity.kind = sub_exponential")?;
            Nonlinearity::SubExponential {
                alpha: e.f64_or("nonlinearity.alpha", 0.5)?,
            }
        }
        "exponential_violator" => {
            e.forbid(
                &["nonlinearity.m", "nonlinearity.alpha"],
                "nonlinearity.kind = exponential_violator",
            )?;
            Nonlinearity::ExponentialViolator
        }
        other => {
            return Err(e.value_error(
                "nonlinearity.kind",
                format!("`{other}` is not product_power|sub_exponential|exponential_violator"),
            ))
        }
    };
    nl.check()
        .map_err(|err| e.value_error("nonlinearity.kind", err.to_string()))?;
    Ok(nl)
}

/// Serializes every setting explicitly, so that [`parse_config`] reproduces `config`.
pub fn write_config(config: &SimulationConfig) -> String {
    let mut out = String::new();
    let mut kv = |key: &str, value: String| {
        let _ = writeln!(out, "{key} = {value}");
    };
    let p = &config.params;
    kv("params.a", fmt_f64(p.a));
    kv("params.b", fmt_f64(p.b));
    kv("params.d", fmt_f64(p.d));
    kv("params.Lambda", fmt_f64(p.recruitment));
    kv("params.mu", fmt_f64(p.mortality));
    kv("params.lambda_hat", fmt_f64(p.lambda_max));
    kv("params.strict_mode", p.strict.to_string());

    let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
    match &config.forcing {
        Forcing::Constant(c) => {
            kv("forcing.kind", "constant".into());
            kv("forcing.value", fmt_f64(*c));
        }
        Forcing::PiecewiseConstant {
            breakpoints,
            values,
        } => {
            kv("forcing.kind", "piecewise_constant".into());
            kv("forcing.breakpoints", list(breakpoints));
            kv("forcing.values", list(values));
        }
        Forcing::Sinusoidal {
            mean,
            amplitude,
            period,
        } => {
            kv("forcing.kind", "sinusoidal_clamped".into());
            kv("forcing.mean", fmt_f64(*mean));
            kv("forcing.amplitude", fmt_f64(*amplitude));
            kv("forcing.period", fmt_f64(*period));
        }
    }
    match config.nonlinearity {
        Nonlinearity::ProductPower { m } => {
            kv("nonlinearity.kind", "product_power".into());
            kv("nonlinearity.m", fmt_f64(m));
        }
        Nonlinearity::SubExponential { alpha } => {
            kv("nonlinearity.kind", "sub_exponential".into());
            kv("nonlinearity.alpha", fmt_f64(alpha));
        }
        Nonlinearity::ExponentialViolator => kv("nonlinearity.kind", "exponential_violator".into()),
    }
    kv("initial.u0", write_field_init(&config.initial.u0));
    kv("initial.v0", write_field_init(&config.initial.v0));
    kv("grid.extent", list(&config.grid.extents));
    kv(
        "grid.cells",
        config
            .grid
            .cells
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(", "),
    );
    let c = &config.control;
    if let Some(dt) = c.dt {
        kv("control.dt", fmt_f64(dt));
    }
    kv("control.safety", fmt_f64(c.safety));
    kv("control.t_end", fmt_f64(c.t_end));
    kv("control.output_every", c.output_every.to_string());
    kv("control.snapshot_every", c.snapshot_every.to_string());
    kv("control.path", path_name(c.path).into());
    if let Some(delta) = config.constants_override.delta {
        kv("constants.delta", fmt_f64(delta));
    }
    if let Some(eps) = config.constants_override.epsilon {
        kv("constants.epsilon", fmt_f64(eps));
    }
    let m = &config.monitors;
    kv("monitor.c_tol", fmt_f64(m.c_tol));
    kv("monitor.invariant_tol", fmt_f64(m.invariant_tol));
    kv("monitor.envelope_tol", fmt_f64(m.envelope_tol));
    kv("monitor.track_j_w", m.track_j_w.to_string());
    kv("output_dir", config.output_dir.display().to_string());
    kv("seed", config.seed.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = include_str!("../examples/canonical.cfg");

    fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
        parse_config(text, &Overrides::default())
    }

    #[test]
    fn canonical_derives_constants() {
        let c = parse(CANONICAL).unwrap();
        assert_eq!(c.constants.delta, 0.5);
        assert!((c.constants.epsilon - 4.0 / 11.0).abs() < 1e-15);
        assert_eq!(c.constants.gamma, 2.75);
        assert_eq!(c.grid.len(), 200);
        assert!(c.hypotheses.all_pass());
    }

    #[test]
    fn structure_failure_cites_line_of_d() {
        let text = CANONICAL.replace("params.d = 2.0", "params.d = 1.5");
        let line = text
            .lines()
            .position(|l| l.starts_with("params.d"))
            .unwrap()
            + 1;
        match parse(&text) {
            Err(ConfigError::Hypothesis { line: l, label, .. }) => {
                assert_eq!(l, line);
                assert_eq!(label, "H1");
            }
            other => panic!("expected H1 rejection, got {other:?}"),
        }
        let relaxed = parse_config(
            &text,
            &Overrides {
                relaxed: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!relaxed.config.params.strict);
        assert!(!relaxed.hypotheses.all_pass());
    }

    #[test]
    fn delta_override_within_range() {
        let text = format!("{CANONICAL}\nconstants.delta = 0.25\n");
        let c = parse(&text).unwrap();
        assert_eq!(c.constants.delta, 0.25);
        assert_eq!(c.constants.delta_max, 0.5);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let text = format!("{CANONICAL}\nparams.zeta = 1\n");
        let n = text.lines().count();
        assert!(matches!(parse(&text), Err(ConfigError::UnknownKey { line, .. }) if line == n));
        let text = format!("{CANONICAL}\nparams.a = 1\n");
        assert!(matches!(parse(&text), Err(ConfigError::Duplicate { .. })));
    }

    #[test]
    fn missing_required_key() {
        let text: String = CANONICAL
            .lines()
            .filter(|l| !l.starts_with("params.mu"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            parse(&text),
            Err(ConfigError::Missing {
                key: "params.mu",
                ..
            })
        ));
    }

    #[test]
    fn misplaced_kind_key_is_rejected() {
        let text = format!("{CANONICAL}\nnonlinearity.alpha = 0.5\n");
        assert!(matches!(parse(&text), Err(ConfigError::Unused { .. })));
    }

    #[test]
    fn unstable_dt_is_rejected_in_strict_mode() {
        let text = format!("{CANONICAL}\ncontrol.dt = 0.01\n");
        assert!(matches!(parse(&text), Err(ConfigError::Unstable { .. })));
    }

    #[test]
    fn defaults_are_echoed() {
        let c = parse(CANONICAL).unwrap();
        let keys: Vec<&str> = c.defaulted.iter().map(|(k, _)| k.as_str()).collect();
        assert!(keys.contains(&"control.dt"));
        assert!(keys.contains(&"monitor.c_tol"));
    }

    #[test]
    fn field_profiles_parse() {
        assert_eq!(parse_field_init("0.5").unwrap(), FieldInit::Constant(0.5));
        assert_eq!(
            parse_field_init("cosine(1, 0.5, 2)").unwrap(),
            FieldInit::Cosine {
                mean: 1.0,
                amplitude: 0.5,
                modes: [2, 0]
            }
        );
        assert_eq!(
            parse_field_init("values(1, 2,3)").unwrap(),
            FieldInit::Values(vec![1.0, 2.0, 3.0])
        );
        assert!(parse_field_init("cosine(1, 0.5, 1.5)").is_err());
        assert!(parse_field_init("spline(1)").is_err());
    }
}
