//! Forward-Euler time integration of the triangular system.
//!
//! Two paths evolve the same dynamics. The direct path steps `(u, v)` with the
//! cross term `b Δu` in the `v` equation. The transformed path steps
//! `(u, w)` with `w = v - b/(d-a)(Λ/µ - u)`, whose diffusion matrix is diagonal:
//!
//! ```text
//! w_t - d Δw = (1 - b/(d-a)) λ f(u, v) - µ w
//! ```

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::constants::DerivedConstants;
use crate::grid::{first_non_finite, laplacian_into, Field, Grid};
use crate::model::{Forcing, ModelParams, Nonlinearity};
use crate::monitor::{self, DisabledMonitor, DissipationTolerance, InvariantId, MonitorReport};
use crate::{Error, Result};

pub const DEFAULT_SAFETY: f64 = 0.9;

/// Densities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

impl State {
    pub fn new(t: f64, u: Field, v: Field) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::input("u and v live on different grids"));
        }
        if !(t >= 0.0) {
            return Err(Error::Domain {
                what: "t",
                value: t,
            });
        }
        Ok(State { t, u, v })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

/// `(u, w)` form of a [`State`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub t: f64,
    pub u: Field,
    pub w: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolverPath {
    Direct,
    Transformed,
}

/// Everything the right-hand side needs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct System {
    pub params: ModelParams,
    pub forcing: Forcing,
    pub nonlinearity: Nonlinearity,
}

impl System {
    fn lambda(&self, t: f64) -> f64 {
        self.forcing.eval(t, self.params.lambda_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepControl {
    /// Requested step; the run shrinks it so a whole number of steps lands on `t_end`.
    pub dt: f64,
    pub safety: f64,
    pub t_end: f64,
    /// Steps between monitor samples.
    pub output_every: usize,
}

/// Largest forward-Euler step kept inside the explicit diffusion limit:
/// `safety · h_min² / (2 · dim · D_eff)`, and at most `safety/µ` when µ > 0.
///
/// `D_eff` is `max(a, d) + b` on the direct path and `max(a, d)` on the
/// transformed one.
pub fn stable_dt(params: &ModelParams, grid: &Grid, safety: f64, path: SolverPath) -> f64 {
    let diag = params.a.max(params.d);
    let d_eff = match path {
        SolverPath::Direct => diag + params.b.abs(),
        SolverPath::Transformed => diag,
    };
    let h = grid.h_min();
    let mut dt = if d_eff > 0.0 {
        safety * h * h / (2.0 * grid.dim() as f64 * d_eff)
    } else {
        f64::INFINITY
    };
    if params.mortality > 0.0 {
        dt = dt.min(safety / params.mortality);
    }
    dt
}

struct Workspace {
    lap_u: Vec<f64>,
    lap_z: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            lap_u: vec![0.0; n],
            lap_z: vec![0.0; n],
        }
    }
}

fn check_step(
    grid: Grid,
    u: Vec<f64>,
    z: Vec<f64>,
    names: [&'static str; 2],
    t: f64,
) -> Result<(Field, Field)> {
    for (name, values) in names.iter().zip([&u, &z]) {
        if let Some(cell) = first_non_finite(values) {
            return Err(Error::NonFinite {
                field: name,
                cell,
                t,
                step: None,
            });
        }
    }
    Ok((Field::from_raw(grid, u), Field::from_raw(grid, z)))
}

#[inline]
fn reaction(nl: &Nonlinearity, u: f64, v: f64, clamps: &mut u64) -> f64 {
    if u < 0.0 || v < 0.0 {
        *clamps += 1;
    }
    nl.rate(u.max(0.0), v.max(0.0))
}

fn advance_direct(
    state: &State,
    system: &System,
    dt: f64,
    ws: &mut Workspace,
    clamps: &mut u64,
) -> Result<State> {
    let grid = *state.grid();
    let p = &system.params;
    let lambda = system.lambda(state.t);
    let (u, v) = (state.u.values(), state.v.values());
    laplacian_into(&grid, u, &mut ws.lap_u);
    laplacian_into(&grid, v, &mut ws.lap_z);

    let mut u_next = Vec::with_capacity(u.len());
    let mut v_next = Vec::with_capacity(v.len());
    for i in 0..u.len() {
        let rate = lambda * reaction(&system.nonlinearity, u[i], v[i], clamps);
        u_next.push(u[i] + dt * (p.a * ws.lap_u[i] + p.recruitment - rate - p.mortality * u[i]));
        v_next
            .push(v[i] + dt * (p.b * ws.lap_u[i] + p.d * ws.lap_z[i] + rate - p.mortality * v[i]));
    }
    let t = state.t + dt;
    let (u, v) = check_step(grid, u_next, v_next, ["u", "v"], t)?;
    Ok(State { t, u, v })
}

/// One forward-Euler step of the `(u, v)` system.
pub fn step_direct(state: &State, system: &System, dt: f64) -> Result<State> {
    let mut ws = Workspace::new(state.u.values().len());
    advance_direct(state, system, dt, &mut ws, &mut 0)
}

#[derive(Clone, Copy)]
struct Transform {
    coupling: f64,
    u_eq: f64,
}

impl Transform {
    fn new(params: &ModelParams) -> Result<Self> {
        let coupling = params
            .coupling()
            .ok_or(Error::TransformUnavailable("needs d > a"))?;
        let u_eq = params
            .u_equilibrium()
            .ok_or(Error::TransformUnavailable("needs mu > 0"))?;
        Ok(Transform { coupling, u_eq })
    }

    #[inline]
    fn offset(&self, u: f64) -> f64 {
        self.coupling * (self.u_eq - u)
    }
}

fn advance_transformed(
    state: &TransformedState,
    system: &System,
    tr: &Transform,
    dt: f64,
    ws: &mut Workspace,
    clamps: &mut u64,
) -> Result<TransformedState> {
    let grid = *state.u.grid();
    let p = &system.params;
    let lambda = system.lambda(state.t);
    let (u, w) = (state.u.values(), state.w.values());
    laplacian_into(&grid, u, &mut ws.lap_u);
    laplacian_into(&grid, w, &mut ws.lap_z);

    let gain = 1.0 - tr.coupling;
    let mut u_next = Vec::with_capacity(u.len());
    let mut w_next = Vec::with_capacity(w.len());
    for i in 0..u.len() {
        let v = w[i] + tr.offset(u[i]);
        let rate = lambda * reaction(&system.nonlinearity, u[i], v, clamps);
        u_next.push(u[i] + dt * (p.a * ws.lap_u[i] + p.recruitment - rate - p.mortality * u[i]));
        w_next.push(w[i] + dt * (p.d * ws.lap_z[i] + gain * rate - p.mortality * w[i]));
    }
    let t = state.t + dt;
    let (u, w) = check_step(grid, u_next, w_next, ["u", "w"], t)?;
    Ok(TransformedState { t, u, w })
}

/// One forward-Euler step of the diagonal `(u, w)` system. `v` is rebuilt from
/// `w` before every evaluation of `f`.
pub fn step_transformed(
    state: &TransformedState,
    system: &System,
    dt: f64,
) -> Result<TransformedState> {
    let tr = Transform::new(&system.params)?;
    let mut ws = Workspace::new(state.u.values().len());
    advance_transformed(state, system, &tr, dt, &mut ws, &mut 0)
}

/// `w = v - b/(d-a)(Λ/µ - u)`.
pub fn to_w(state: &State, params: &ModelParams) -> Result<TransformedState> {
    let tr = Transform::new(params)?;
    let w = state.u.zip_with(&state.v, |u, v| v - tr.offset(u))?;
    Ok(TransformedState {
        t: state.t,
        u: state.u.clone(),
        w,
    })
}

/// Inverse of [`to_w`].
pub fn from_w(state: &TransformedState, params: &ModelParams) -> Result<State> {
    let tr = Transform::new(params)?;
    let v = state.u.zip_with(&state.w, |u, w| w + tr.offset(u))?;
    Ok(State {
        t: state.t,
        u: state.u.clone(),
        v,
    })
}

/// Tolerances and switches for the monitors evaluated during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonitorSettings {
    pub c_tol: f64,
    pub invariant_tol: f64,
    /// Envelope slack as a fraction of `J(0)`.
    pub envelope_tol: f64,
    /// Also record `J` with `e^{εw}`.
    pub track_j_w: bool,
    /// Whether the initial data satisfied every gating hypothesis; the
    /// invariant-region monitors only run when it did.
    pub hypotheses_hold: bool,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        MonitorSettings {
            c_tol: monitor::DEFAULT_DISSIPATION_C_TOL,
            invariant_tol: monitor::DEFAULT_INVARIANT_TOL,
            envelope_tol: monitor::DEFAULT_ENVELOPE_TOL,
            track_j_w: false,
            hypotheses_hold: true,
        }
    }
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: System,
    pub u0: Field,
    pub v0: Field,
    pub control: StepControl,
    pub path: SolverPath,
    pub constants: DerivedConstants,
    pub monitors: MonitorSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: MonitorReport,
    /// Last state reached (the failing step's input when `error` is set).
    pub final_state: State,
    pub steps_taken: u64,
    pub dt: f64,
    pub error: Option<Error>,
}

/// Number of steps and the uniform step that land exactly on `t_end`.
pub fn step_plan(t_end: f64, dt: f64) -> Result<(u64, f64)> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Domain {
            what: "t_end",
            value: t_end,
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain {
            what: "dt",
            value: dt,
        });
    }
    if t_end == 0.0 {
        return Ok((0, dt));
    }
    let n = libm::ceil(t_end / dt) as u64;
    Ok((n, t_end / n as f64))
}

enum Evolving {
    Direct(State),
    Transformed(TransformedState, Transform),
}

impl Evolving {
    fn state(&self, params: &ModelParams) -> Result<State> {
        match self {
            Evolving::Direct(s) => Ok(s.clone()),
            Evolving::Transformed(s, _) => from_w(s, params),
        }
    }

    fn j_w(&self, state: &State, params: &ModelParams, delta: f64, epsilon: f64) -> Result<f64> {
        match self {
            Evolving::Transformed(s, _) => monitor::lyapunov_j_w(&s.u, &s.w, delta, epsilon),
            Evolving::Direct(_) => {
                let w = to_w(state, params)?;
                monitor::lyapunov_j_w(&w.u, &w.w, delta, epsilon)
            }
        }
    }

    fn set_time(&mut self, t: f64) {
        match self {
            Evolving::Direct(s) => s.t = t,
            Evolving::Transformed(s, _) => s.t = t,
        }
    }
}

/// Steps from `t = 0` to `t_end`, sampling monitors every `output_every` steps
/// and at the final step. `observer` sees each sampled state.
///
/// An integrity error stops the run; everything sampled so far is kept.
pub fn run(scenario: &Scenario, observer: &mut dyn FnMut(&State)) -> Result<RunOutcome> {
    let system = &scenario.system;
    let params = &system.params;
    let control = &scenario.control;
    let consts = &scenario.constants;
    let settings = &scenario.monitors;
    if control.output_every == 0 {
        return Err(Error::input("output_every must be at least 1"));
    }
    let (n_steps, dt) = step_plan(control.t_end, control.dt)?;
    let initial = State::new(0.0, scenario.u0.clone(), scenario.v0.clone())?;
    let grid = *initial.grid();

    let mut report = MonitorReport::default();
    let invariants_on = params.strict && settings.hypotheses_hold;
    if !invariants_on {
        let reason = if params.strict {
            "initial data violate a gating hypothesis"
        } else {
            "relaxed mode"
        };
        for id in [
            InvariantId::UNonnegative,
            InvariantId::UBelowK,
            InvariantId::VNonnegative,
            InvariantId::InvariantLine,
        ] {
            report.disabled.push(DisabledMonitor {
                monitor: id,
                reason: String::from(reason),
            });
        }
    }
    let decay_on = params.mortality > 0.0;
    if !decay_on {
        for id in [InvariantId::Dissipation, InvariantId::Envelope] {
            report.disabled.push(DisabledMonitor {
                monitor: id,
                reason: String::from("mu = 0: no decay estimate"),
            });
        }
    }

    let mut evolving = match scenario.path {
        SolverPath::Direct => Evolving::Direct(initial.clone()),
        SolverPath::Transformed => {
            let tr = Transform::new(params)?;
            Evolving::Transformed(to_w(&initial, params)?, tr)
        }
    };
    let mut ws = Workspace::new(grid.len());
    let mut clamps = 0u64;
    let mut error = None;
    let mut last = initial;
    let mut steps_taken = 0;

    let mut record =
        |state: &State, evolving: &Evolving, report: &mut MonitorReport| -> Result<()> {
            let j_w = if settings.track_j_w
                && params.coupling().is_some()
                && params.u_equilibrium().is_some()
            {
                Some(evolving.j_w(state, params, consts.delta, consts.epsilon)?)
            } else {
                None
            };
            let sample = monitor::sample(
                state,
                params,
                consts.delta,
                consts.epsilon,
                consts.gamma,
                j_w,
            )?;
            report.samples.push(sample);
            if invariants_on {
                report.violations.extend(monitor::check_invariants(
                    state,
                    params,
                    consts.k,
                    settings.invariant_tol,
                ));
            }
            observer(state);
            Ok(())
        };

    if let Err(e) = record(&last, &evolving, &mut report) {
        error = Some(e.at_step(0));
    }

    let mut step = 0;
    while error.is_none() && step < n_steps {
        let advanced = match &evolving {
            Evolving::Direct(s) => {
                advance_direct(s, system, dt, &mut ws, &mut clamps).map(Evolving::Direct)
            }
            Evolving::Transformed(s, tr) => {
                advance_transformed(s, system, tr, dt, &mut ws, &mut clamps)
                    .map(|next| Evolving::Transformed(next, *tr))
            }
        };
        step += 1;
        match advanced {
            Ok(mut next) => {
                next.set_time(step as f64 * dt);
                evolving = next;
                steps_taken = step;
                if step % control.output_every as u64 == 0 || step == n_steps {
                    match evolving.state(params) {
                        Ok(state) => {
                            if let Err(e) = record(&state, &evolving, &mut report) {
                                error = Some(e.at_step(step));
                            }
                            last = state;
                        }
                        Err(e) => error = Some(e.at_step(step)),
                    }
                }
            }
            Err(e) => error = Some(e.at_step(step)),
        }
    }
    if error.is_none() {
        last = evolving.state(params)?;
    }

    report.reaction_clamps = clamps;
    monitor::fill_derivatives(&mut report.samples);
    if decay_on && report.samples.len() >= 2 {
        let tol = DissipationTolerance {
            c_tol: settings.c_tol,
            dt,
            h2: grid.h_max() * grid.h_max(),
        };
        let series: Vec<(f64, f64)> = report.samples.iter().map(|s| (s.t, s.j)).collect();
        report.violations.extend(monitor::check_dissipation(
            &series,
            params.mortality,
            consts.gamma,
            tol,
        )?);
    }
    if decay_on {
        if let Some(first) = report.samples.first() {
            let j0 = first.j;
            let slack = settings.envelope_tol * j0.abs();
            for s in &report.samples {
                let bound = monitor::decay_envelope(j0, params.mortality, consts.gamma, s.t)?;
                let excess = s.j - bound;
                if excess > slack {
                    report.violations.push(monitor::Violation {
                        invariant: InvariantId::Envelope,
                        t: s.t,
                        witness: excess,
                        tolerance: slack,
                        cell: None,
                    });
                }
            }
        }
    }
    report
        .violations
        .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.invariant.cmp(&b.invariant)));

    Ok(RunOutcome {
        report,
        final_state: last,
        steps_taken,
        dt,
        error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;

    fn params() -> ModelParams {
        ModelParams {
            a: 1.0,
            b: 1.0,
            d: 2.0,
            recruitment: 1.0,
            mortality: 2.0,
            lambda_max: 1.0,
            strict: true,
        }
    }

    fn system(params: ModelParams, lambda: f64) -> System {
        System {
            params,
            forcing: Forcing::Constant(lambda),
            nonlinearity: Nonlinearity::ProductPower { m: 1.0 },
        }
    }

    fn uniform(u: f64, v: f64) -> State {
        let g = Grid::line(1.0, 8).unwrap();
        State::new(
            0.0,
            Field::constant(g, u).unwrap(),
            Field::constant(g, v).unwrap(),
        )
        .unwrap()
    }

    fn wavy(n: usize) -> State {
        let g = Grid::line(1.0, n).unwrap();
        let u = Field::from_fn(g, |[x, _]| 0.3 + 0.1 * libm::cos(3.0 * x)).unwrap();
        let v = Field::from_fn(g, |[x, _]| 1.0 + 0.5 * libm::sin(5.0 * x)).unwrap();
        State::new(0.0, u, v).unwrap()
    }

    #[test]
    fn stable_dt_examples() {
        let p = params();
        let g = Grid::line(1.0, 100).unwrap();
        let tr = stable_dt(&p, &g, 0.9, SolverPath::Transformed);
        assert!((tr - 2.25e-5).abs() < 1e-18);
        let di = stable_dt(&p, &g, 0.9, SolverPath::Direct);
        assert!((di - 1.5e-5).abs() < 1e-18);
        let g2 = Grid::rectangle(1.0, 1.0, 10, 10).unwrap();
        let p2 = ModelParams {
            a: 1.0,
            d: 1.0,
            b: 0.0,
            ..p
        };
        assert!((stable_dt(&p2, &g2, 1.0, SolverPath::Transformed) - 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn uniform_ode_step_without_infection() {
        let next = step_direct(&uniform(0.2, 0.0), &system(params(), 0.0), 0.1).unwrap();
        assert!(next.u.values().iter().all(|&x| (x - 0.26).abs() < 1e-15));
        assert!(next.v.values().iter().all(|&x| x == 0.0));
        assert!((next.t - 0.1).abs() < 1e-15);
    }

    #[test]
    fn uniform_ode_step_with_infection() {
        // u: 0.5 + 0.1(1 - 0.5 - 1) = 0.45; v: 1 + 0.1(0.5 - 2) = 0.85
        let next = step_direct(&uniform(0.5, 1.0), &system(params(), 1.0), 0.1).unwrap();
        assert!(next.u.values().iter().all(|&x| (x - 0.45).abs() < 1e-15));
        assert!(next.v.values().iter().all(|&x| (x - 0.85).abs() < 1e-15));
    }

    #[test]
    fn single_step_conserves_mass_without_sources() {
        let p = ModelParams {
            recruitment: 0.0,
            mortality: 0.0,
            strict: false,
            ..params()
        };
        let s = wavy(40);
        let dt = stable_dt(&p, s.grid(), 0.9, SolverPath::Direct);
        let next = step_direct(&s, &system(p, 0.0), dt).unwrap();
        let before = integrate(&s.u) + integrate(&s.v);
        let after = integrate(&next.u) + integrate(&next.v);
        assert!(((after - before) / before).abs() < 1e-13);
    }

    #[test]
    fn transform_examples() {
        let p = params();
        let s = uniform(0.5, 0.8);
        let w = to_w(&s, &p).unwrap();
        assert_eq!(w.w, s.v);

        let s = uniform(0.2, 1.0);
        let w = to_w(&s, &p).unwrap();
        assert!(w.w.values().iter().all(|&x| (x - 0.7).abs() < 1e-15));
        assert_eq!(from_w(&w, &p).unwrap(), s);

        let flat = ModelParams { d: 1.0, ..p };
        assert!(matches!(
            to_w(&s, &flat),
            Err(Error::TransformUnavailable(_))
        ));
        let no_decay = ModelParams {
            mortality: 0.0,
            ..p
        };
        assert!(to_w(&s, &no_decay).is_err());
    }

    #[test]
    fn transformed_fixed_point() {
        let p = params();
        let s = to_w(&uniform(0.5, 0.0), &p).unwrap();
        let next = step_transformed(&s, &system(p, 0.0), 1e-3).unwrap();
        assert!(next.w.values().iter().all(|&x| x == 0.0));
        assert!(next.u.values().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn zero_gain_means_pure_decay() {
        // b = d - a: the reaction drops out of the w equation.
        let p = params();
        let s = to_w(&uniform(0.3, 0.9), &p).unwrap();
        let w0 = s.w.values()[0];
        let dt = 1e-2;
        let next = step_transformed(&s, &system(p, 1.0), dt).unwrap();
        let expect = w0 + dt * (-p.mortality * w0);
        assert!(next.w.values().iter().all(|&x| x == expect));
    }

    #[test]
    fn both_paths_agree_after_one_step() {
        let p = params();
        let sys = system(p, 1.0);
        let s = uniform(0.5, 1.0);
        let direct = step_direct(&s, &sys, 0.01).unwrap();
        let via_w = step_transformed(&to_w(&s, &p).unwrap(), &sys, 0.01).unwrap();
        let back = from_w(&via_w, &p).unwrap();
        for (a, b) in direct.v.values().iter().zip(back.v.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn step_plan_lands_on_t_end() {
        let (n, dt) = step_plan(1.0, 0.3).unwrap();
        assert_eq!(n, 4);
        assert_eq!(dt, 0.25);
        assert_eq!(step_plan(0.0, 0.1).unwrap().0, 0);
        assert!(step_plan(1.0, 0.0).is_err());
    }

    #[test]
    fn negative_densities_are_clamped_inside_f() {
        let mut clamps = 0;
        let nl = Nonlinearity::ProductPower { m: 1.5 };
        let r = reaction(&nl, -1e-12, 2.0, &mut clamps);
        assert_eq!((r, clamps), (0.0, 1));
    }
}
