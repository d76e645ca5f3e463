//! Refinement studies for the forward-Euler discretization.
//!
//! The temporal study halves `dt` on a spatially uniform problem with `λ ≡ 0`,
//! whose exact solution is `u = Λ/µ + (u0 - Λ/µ)e^{-µt}`, `v = v0 e^{-µt}`.
//! The spatial study triples the cell count per axis and divides `dt` by nine
//! (`dt ∝ h²`), measuring each level against a finer reference run. With a
//! factor of three the coarse cell centers coincide with reference cell
//! centers, so no interpolation enters the error.

use serde::{Deserialize, Serialize};

use epidiffuse_core::constants::ConstantsOverride;
use epidiffuse_core::constants::DerivedConstants;
use epidiffuse_core::grid::{extrema, Field, Grid};
use epidiffuse_core::model::{FieldInit, Forcing, ModelParams};
use epidiffuse_core::solver::{
    self, MonitorSettings, Scenario, SolverPath, State, StepControl, System,
};
use epidiffuse_core::Error;

use crate::config::LoadedConfig;

/// Horizon of the temporal study.
pub const TEMPORAL_HORIZON: f64 = 1.0;
/// Steps of the coarsest temporal level.
pub const TEMPORAL_BASE_STEPS: u64 = 20;
/// Horizon of the spatial study.
pub const SPATIAL_HORIZON: f64 = 0.1;
/// Cells per axis of the coarsest spatial level.
pub const SPATIAL_BASE_CELLS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub cells: usize,
    pub dt: f64,
    pub error: f64,
    /// Observed order against the previous level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub temporal: Vec<LevelRow>,
    pub spatial: Vec<LevelRow>,
    /// Order between the two finest temporal levels.
    pub temporal_order: f64,
    /// Order between the two finest spatial levels.
    pub spatial_order: f64,
}

fn quiet_scenario(
    system: System,
    u0: Field,
    v0: Field,
    t_end: f64,
    steps: u64,
) -> Result<Scenario, Error> {
    let grid = *u0.grid();
    let constants = DerivedConstants::derive(
        &system.params,
        extrema(&u0).1.max(0.0),
        grid.measure(),
        ConstantsOverride::default(),
    )?;
    Ok(Scenario {
        system,
        u0,
        v0,
        control: StepControl {
            dt: t_end / steps as f64,
            safety: 1.0,
            t_end,
            output_every: steps.max(1) as usize,
        },
        path: SolverPath::Direct,
        constants,
        monitors: MonitorSettings {
            hypotheses_hold: false,
            ..MonitorSettings::default()
        },
    })
}

fn final_state(scenario: &Scenario) -> Result<State, Error> {
    let outcome = solver::run(scenario, &mut |_| {})?;
    match outcome.error {
        Some(e) => Err(e),
        None => Ok(outcome.final_state),
    }
}

pub type Job<'a, T> = Box<dyn FnOnce() -> T + Send + 'a>;

/// Runs `jobs` on up to `threads` worker threads (0 = on the caller's thread),
/// returning results in job order.
pub fn run_levels<T: Send>(jobs: Vec<Job<'_, T>>, threads: usize) -> Vec<T> {
    if threads <= 1 {
        return jobs.into_iter().map(|job| job()).collect();
    }
    let mut results = Vec::with_capacity(jobs.len());
    let mut jobs = jobs.into_iter().peekable();
    while jobs.peek().is_some() {
        let batch: Vec<_> = jobs.by_ref().take(threads).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = batch.into_iter().map(|job| s.spawn(job)).collect();
            results.extend(
                handles
                    .into_iter()
                    .map(|h| h.join().expect("level thread panicked")),
            );
        });
    }
    results
}

fn order(prev: f64, next: f64, ratio: f64) -> f64 {
    (prev / next).ln() / ratio.ln()
}

/// Halves `dt` `levels - 1` times against the closed-form uniform solution.
pub fn temporal_study(
    params: &ModelParams,
    levels: usize,
    threads: usize,
) -> Result<Vec<LevelRow>, Error> {
    if levels < 2 {
        return Err(Error::Input(format!(
            "convergence needs at least 2 levels, got {levels}"
        )));
    }
    let mu = params.mortality;
    let eq = params
        .u_equilibrium()
        .ok_or_else(|| Error::Hypothesis("temporal study needs mu > 0".into()))?;
    let (u_start, v_start) = (if eq > 0.0 { 0.0 } else { 1.0 }, 1.0);
    let system = System {
        params: *params,
        forcing: Forcing::Constant(0.0),
        nonlinearity: epidiffuse_core::model::Nonlinearity::ProductPower { m: 1.0 },
    };
    let grid = Grid::line(1.0, 3)?;
    let decay = (-mu * TEMPORAL_HORIZON).exp();
    let u_exact = eq + (u_start - eq) * decay;
    let v_exact = v_start * decay;

    let jobs: Vec<Job<Result<(u64, f64), Error>>> = (0..levels)
        .map(|k| {
            let system = system.clone();
            Box::new(move || {
                let steps = TEMPORAL_BASE_STEPS << k;
                let sc = quiet_scenario(
                    system,
                    Field::constant(grid, u_start)?,
                    Field::constant(grid, v_start)?,
                    TEMPORAL_HORIZON,
                    steps,
                )?;
                let s = final_state(&sc)?;
                let err =
                    s.u.values()
                        .iter()
                        .map(|u| (u - u_exact).abs())
                        .chain(s.v.values().iter().map(|v| (v - v_exact).abs()))
                        .fold(0.0, f64::max);
                Ok((steps, err))
            }) as Job<_>
        })
        .collect();
    let results = run_levels(jobs, threads)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows(&results, grid.len(), TEMPORAL_HORIZON, 2.0))
}

fn rows(results: &[(u64, f64)], cells: usize, horizon: f64, ratio: f64) -> Vec<LevelRow> {
    results
        .iter()
        .enumerate()
        .map(|(k, &(steps, error))| LevelRow {
            level: k,
            cells,
            dt: horizon / steps as f64,
            error,
            order: (k > 0).then(|| order(results[k - 1].1, error, ratio)),
        })
        .collect()
}

/// Default smooth profile when the configured initial data are not a smooth closed form.
fn smooth_profiles(params: &ModelParams, dim: usize) -> (FieldInit, FieldInit) {
    let scale = params.u_equilibrium().filter(|&eq| eq > 0.0).unwrap_or(1.0);
    let ky = if dim == 2 { 1 } else { 0 };
    (
        FieldInit::Cosine {
            mean: 0.5 * scale,
            amplitude: 0.25 * scale,
            modes: [1, ky],
        },
        FieldInit::Cosine {
            mean: 1.0,
            amplitude: 0.5,
            modes: [1, ky],
        },
    )
}

fn is_smooth(init: &FieldInit) -> bool {
    matches!(init, FieldInit::Cosine { .. } | FieldInit::Gaussian { .. })
}

/// Triples the resolution `levels - 1` times with `dt ∝ h²`, comparing each
/// level with a run one refinement beyond the finest.
pub fn spatial_study(
    loaded: &LoadedConfig,
    levels: usize,
    threads: usize,
) -> Result<Vec<LevelRow>, Error> {
    if levels < 2 {
        return Err(Error::Input(format!(
            "convergence needs at least 2 levels, got {levels}"
        )));
    }
    let c = &loaded.config;
    let dim = loaded.grid.dim();
    let init = &c.initial;
    let (u_init, v_init) = if is_smooth(&init.u0) && is_smooth(&init.v0) {
        (init.u0.clone(), init.v0.clone())
    } else {
        smooth_profiles(&c.params, dim)
    };
    let system = System {
        params: c.params,
        forcing: c.forcing.clone(),
        nonlinearity: c.nonlinearity,
    };
    let base = SPATIAL_BASE_CELLS;
    let base_grid = loaded.grid.refined(&vec![base; dim])?;
    let dt0 = solver::stable_dt(
        &c.params,
        &base_grid,
        solver::DEFAULT_SAFETY,
        SolverPath::Direct,
    );
    let steps0 = (SPATIAL_HORIZON / dt0).ceil() as u64;

    // levels 0..levels-1 plus the reference at index `levels`
    let jobs: Vec<Job<Result<State, Error>>> = (0..=levels)
        .map(|k| {
            let system = system.clone();
            let (u_init, v_init) = (u_init.clone(), v_init.clone());
            let loaded_grid = loaded.grid;
            Box::new(move || {
                let n = base * 3usize.pow(k as u32);
                let grid = loaded_grid.refined(&vec![n; dim])?;
                let steps = steps0 * 9u64.pow(k as u32);
                let sc = quiet_scenario(
                    system,
                    u_init.sample(&grid, 0, 0)?,
                    v_init.sample(&grid, 0, 1)?,
                    SPATIAL_HORIZON,
                    steps,
                )?;
                final_state(&sc)
            }) as Job<_>
        })
        .collect();
    let mut states = run_levels(jobs, threads)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let reference = states.pop().expect("reference level");

    let results: Vec<(u64, f64)> = states
        .iter()
        .enumerate()
        .map(|(k, s)| (steps0 * 9u64.pow(k as u32), injected_error(s, &reference)))
        .collect();
    let mut out = rows(&results, 0, SPATIAL_HORIZON, 3.0);
    for (k, row) in out.iter_mut().enumerate() {
        row.cells = states[k].grid().len();
    }
    Ok(out)
}

/// Max-norm difference between a coarse state and the reference cell sharing its center.
fn injected_error(coarse: &State, reference: &State) -> f64 {
    let cg = coarse.grid();
    let rg = reference.grid();
    let stride = rg.cells()[0] / cg.cells()[0];
    let offset = stride / 2;
    (0..cg.len())
        .map(|idx| {
            let [i, j] = cg.position(idx);
            let rj = if cg.dim() == 2 {
                j * stride + offset
            } else {
                0
            };
            let r = rg.index(i * stride + offset, rj);
            let du = (coarse.u.values()[idx] - reference.u.values()[r]).abs();
            let dv = (coarse.v.values()[idx] - reference.v.values()[r]).abs();
            du.max(dv)
        })
        .fold(0.0, f64::max)
}

pub fn convergence(
    loaded: &LoadedConfig,
    levels: usize,
    threads: usize,
) -> Result<ConvergenceTable, Error> {
    let temporal = temporal_study(&loaded.config.params, levels, threads)?;
    let spatial = spatial_study(loaded, levels, threads)?;
    let last = |rows: &[LevelRow]| rows.last().and_then(|r| r.order).unwrap_or(f64::NAN);
    Ok(ConvergenceTable {
        temporal_order: last(&temporal),
        spatial_order: last(&spatial),
        temporal,
        spatial,
    })
}
