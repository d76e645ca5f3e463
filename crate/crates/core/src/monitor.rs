//! Runtime monitors: the Lyapunov functional, its dissipation inequality and
//! Gronwall envelope, and the invariant-region bounds.

use alloc::vec::Vec;

use crate::grid::{extrema, sum_ordered, Field};
use crate::model::ModelParams;
use crate::solver::State;
use crate::{Error, Result};

/// Default absolute tolerance for the invariant-region checks.
pub const DEFAULT_INVARIANT_TOL: f64 = 1e-6;
/// Default multiplier `c_tol` of the dissipation tolerance `c_tol (dt + h²) J`.
pub const DEFAULT_DISSIPATION_C_TOL: f64 = 1.0;
/// Default envelope slack, relative to `J(0)`.
pub const DEFAULT_ENVELOPE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InvariantId {
    /// `u ≥ 0`.
    UNonnegative,
    /// `u ≤ K`.
    UBelowK,
    /// `v ≥ 0`.
    VNonnegative,
    /// `v ≥ b/(d-a)(Λ/µ - u)`.
    InvariantLine,
    /// Forward-difference `J'` against `-µ/2 J + γ`.
    Dissipation,
    /// `J(t)` against the integrated Gronwall envelope.
    Envelope,
}

impl InvariantId {
    pub fn as_str(&self) -> &'static str {
        match self {
            InvariantId::UNonnegative => "u_nonnegative",
            InvariantId::UBelowK => "u_below_k",
            InvariantId::VNonnegative => "v_nonnegative",
            InvariantId::InvariantLine => "invariant_line",
            InvariantId::Dissipation => "dissipation",
            InvariantId::Envelope => "envelope",
        }
    }
}

/// A breached bound. `witness` is the amount by which the bound is exceeded
/// and is always strictly larger than `tolerance`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Violation {
    pub invariant: InvariantId,
    pub t: f64,
    pub witness: f64,
    pub tolerance: f64,
    pub cell: Option<usize>,
}

/// One row of the monitor time series.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonitorSample {
    pub t: f64,
    pub j: f64,
    /// Forward difference to the next sample (backward for the last one).
    pub dj_dt: Option<f64>,
    /// `-µ/2 J + γ`.
    pub rhs_34: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    /// `min (v - b/(d-a)(Λ/µ - u))`; absent when the transform is undefined.
    pub lemma_margin: Option<f64>,
    /// `∫ (u + v)`.
    pub mass: f64,
    /// `∫ (1 + δ(1 + u + u²)) e^{εw}`, when requested.
    pub j_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DisabledMonitor {
    pub monitor: InvariantId,
    pub reason: alloc::string::String,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonitorReport {
    pub samples: Vec<MonitorSample>,
    pub violations: Vec<Violation>,
    pub disabled: Vec<DisabledMonitor>,
    /// Cell evaluations where a negative density was clamped to 0 inside `f`.
    pub reaction_clamps: u64,
}

impl MonitorReport {
    pub fn count(&self, invariant: InvariantId) -> usize {
        self.violations
            .iter()
            .filter(|v| v.invariant == invariant)
            .count()
    }

    pub fn sup_j(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.j)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn weighted_exponential(
    u: &[f64],
    z: &[f64],
    delta: f64,
    epsilon: f64,
    volume: f64,
) -> Result<f64> {
    let integrand: Vec<f64> = u
        .iter()
        .zip(z)
        .map(|(&u, &z)| (1.0 + delta * (1.0 + u + u * u)) * libm::exp(epsilon * z))
        .collect();
    let total = sum_ordered(&integrand) * volume;
    if total.is_finite() {
        Ok(total)
    } else {
        let max_v = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Err(Error::Overflow { max_v })
    }
}

/// `J = ∫ (1 + δ(1 + u + u²)) e^{εv}` by the midpoint rule.
pub fn lyapunov_j(state: &State, delta: f64, epsilon: f64) -> Result<f64> {
    weighted_exponential(
        state.u.values(),
        state.v.values(),
        delta,
        epsilon,
        state.u.grid().cell_volume(),
    )
}

/// The same functional with the transformed variable `w` in the exponent.
pub fn lyapunov_j_w(u: &Field, w: &Field, delta: f64, epsilon: f64) -> Result<f64> {
    weighted_exponential(
        u.values(),
        w.values(),
        delta,
        epsilon,
        u.grid().cell_volume(),
    )
}

/// Discretization budget for the dissipation check: `c_tol (dt + h²) J_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationTolerance {
    pub c_tol: f64,
    pub dt: f64,
    pub h2: f64,
}

impl DissipationTolerance {
    pub fn at(&self, j: f64) -> f64 {
        self.c_tol * (self.dt + self.h2) * j.abs()
    }
}

/// Compares forward differences of `J` against `-µ/2 J_k + γ` on each interval.
/// `samples` are `(t, J)` pairs in strictly increasing `t`.
pub fn check_dissipation(
    samples: &[(f64, f64)],
    mu: f64,
    gamma: f64,
    tol: DissipationTolerance,
) -> Result<Vec<Violation>> {
    if samples.len() < 2 {
        return Err(Error::input("dissipation check needs at least 2 samples"));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::input("sample times must be strictly increasing"));
    }
    Ok(samples
        .windows(2)
        .filter_map(|w| {
            let ((t0, j0), (t1, j1)) = (w[0], w[1]);
            let slope = (j1 - j0) / (t1 - t0);
            let excess = slope - (-0.5 * mu * j0 + gamma);
            let tolerance = tol.at(j0);
            (excess > tolerance).then_some(Violation {
                invariant: InvariantId::Dissipation,
                t: t0,
                witness: excess,
                tolerance,
                cell: None,
            })
        })
        .collect())
}

/// Integrated form of `J' ≤ -µ/2 J + γ`: `(J0 - 2γ/µ) e^{-µt/2} + 2γ/µ`.
pub fn decay_envelope(j0: f64, mu: f64, gamma: f64, t: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain {
            what: "mu (envelope needs decay)",
            value: mu,
        });
    }
    if !(t >= 0.0) {
        return Err(Error::Domain {
            what: "t",
            value: t,
        });
    }
    let level = 2.0 * gamma / mu;
    Ok((j0 - level) * libm::exp(-0.5 * mu * t) + level)
}

/// `min (v - b/(d-a)(Λ/µ - u))` and the cell attaining it.
pub fn lemma_margin(state: &State, params: &ModelParams) -> Option<(usize, f64)> {
    let c = params.coupling()?;
    let eq = params.u_equilibrium()?;
    Some(
        state
            .u
            .values()
            .iter()
            .zip(state.v.values())
            .map(|(&u, &v)| v - c * (eq - u))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, m)| if m < best.1 { (i, m) } else { best },
            ),
    )
}

/// Flags `u < -tol`, `u > K + tol`, `v < -tol` and an invariant-line margin
/// below `-tol`, one violation per bound carrying the worst cell.
pub fn check_invariants(state: &State, params: &ModelParams, k: f64, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |invariant, excess: f64, cell| {
        if excess > tol {
            out.push(Violation {
                invariant,
                t: state.t,
                witness: excess,
                tolerance: tol,
                cell: Some(cell),
            });
        }
    };

    let (i_min, u_min) = arg_extreme(state.u.values(), |a, b| a < b);
    let (i_max, u_max) = arg_extreme(state.u.values(), |a, b| a > b);
    let (j_min, v_min) = arg_extreme(state.v.values(), |a, b| a < b);
    flag(InvariantId::UNonnegative, -u_min, i_min);
    flag(InvariantId::UBelowK, u_max - k, i_max);
    flag(InvariantId::VNonnegative, -v_min, j_min);
    if let Some((cell, margin)) = lemma_margin(state, params) {
        flag(InvariantId::InvariantLine, -margin, cell);
    }
    out
}

fn arg_extreme(values: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &x) in values.iter().enumerate().skip(1) {
        if better(x, best.1) {
            best = (i, x);
        }
    }
    best
}

/// Assembles one sample row from a state.
pub fn sample(
    state: &State,
    params: &ModelParams,
    delta: f64,
    epsilon: f64,
    gamma: f64,
    j_w: Option<f64>,
) -> Result<MonitorSample> {
    let j = lyapunov_j(state, delta, epsilon)?;
    let (min_u, max_u) = extrema(&state.u);
    let (min_v, _) = extrema(&state.v);
    let mass = state
        .u
        .values()
        .iter()
        .zip(state.v.values())
        .fold(0.0, |acc, (&u, &v)| acc + (u + v))
        * state.u.grid().cell_volume();
    Ok(MonitorSample {
        t: state.t,
        j,
        dj_dt: None,
        rhs_34: -0.5 * params.mortality * j + gamma,
        min_u,
        max_u,
        min_v,
        lemma_margin: lemma_margin(state, params).map(|(_, m)| m),
        mass,
        j_w,
    })
}

/// Fills `dj_dt` with forward differences (backward for the last sample).
pub fn fill_derivatives(samples: &mut [MonitorSample]) {
    let n = samples.len();
    if n < 2 {
        return;
    }
    for k in 0..n {
        let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
        samples[k].dj_dt = Some((samples[b].j - samples[a].j) / (samples[b].t - samples[a].t));
    }
}
