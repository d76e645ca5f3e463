//! Constants of the Lyapunov argument and the algebraic facts it relies on.
//!
//! `K` bounds `u`; `δ` and `ε` weight the functional
//! `J = ∫ (1 + δ(1 + u + u²)) e^{εv}`; `γ` is the constant offset in
//! `J' ≤ -µ/2 J + γ`. The admissibility scan checks, on samples of `u ∈ [0, K]`,
//! that the gradient quadratic form has a non-positive discriminant and that
//! the reaction coefficients have the signs the dissipation estimate needs.

use alloc::vec::Vec;

use crate::model::ModelParams;
use crate::{Error, Result};

/// Absolute slack for every sign check in the admissibility scan.
pub const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// Samples used by default on `[0, K]`.
pub const DEFAULT_SAMPLES: usize = 1001;

/// The bound `K = max(‖u0‖∞, Λ/µ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KBound {
    pub value: f64,
    /// Set in relaxed mode when µ = 0 and `K` falls back to `‖u0‖∞`.
    pub decay_missing: bool,
}

pub fn compute_k(params: &ModelParams, u0_sup: f64) -> Result<KBound> {
    if !(u0_sup >= 0.0) {
        return Err(Error::Domain {
            what: "sup u0",
            value: u0_sup,
        });
    }
    match params.u_equilibrium() {
        Some(eq) => Ok(KBound {
            value: u0_sup.max(eq),
            decay_missing: false,
        }),
        None if params.strict => Err(Error::Hypothesis(alloc::format!(
            "mu = {} leaves Lambda/mu undefined",
            params.mortality
        ))),
        None => Ok(KBound {
            value: u0_sup,
            decay_missing: true,
        }),
    }
}

/// Ceiling on δ: `min(µ/(2Λ(1+2K)), 2(2√(ab)/(a+b) · 1/(1+2K))²)`.
/// The first branch is `+∞` when Λ = 0.
pub fn compute_delta_max(params: &ModelParams, k: f64) -> Result<f64> {
    let (a, b) = (params.a, params.b);
    if !(a > 0.0) {
        return Err(Error::Hypothesis(alloc::format!(
            "a = {a} must be positive"
        )));
    }
    if !(b > 0.0) {
        return Err(Error::Hypothesis(alloc::format!(
            "b = {b} must be positive"
        )));
    }
    let reaction = if params.recruitment == 0.0 {
        f64::INFINITY
    } else {
        params.mortality / (2.0 * params.recruitment * (1.0 + 2.0 * k))
    };
    let ratio = 2.0 * libm::sqrt(a * b) / (a + b) / (1.0 + 2.0 * k);
    let gradient = 2.0 * ratio * ratio;
    Ok(reaction.min(gradient))
}

/// Ceiling on ε: `δ/(1 + δ(K + K²)) · min(1, (d - a)/b)`.
pub fn compute_epsilon_max(params: &ModelParams, k: f64, delta: f64) -> Result<f64> {
    if params.b == 0.0 {
        return Err(Error::Domain {
            what: "b (divisor of (d - a)/b)",
            value: 0.0,
        });
    }
    let spread = ((params.d - params.a) / params.b).min(1.0);
    Ok(delta / (1.0 + delta * (k + k * k)) * spread)
}

/// `γ = µ(1 + δ(K + K²))|Ω|`.
pub fn compute_gamma(params: &ModelParams, k: f64, delta: f64, measure: f64) -> f64 {
    params.mortality * (1.0 + delta * (k + k * k)) * measure
}

/// Discriminant of the quadratic form in `(∇u, ∇v)` at density `u`.
pub fn discriminant(params: &ModelParams, delta: f64, epsilon: f64, u: f64) -> f64 {
    let (a, b, d) = (params.a, params.b, params.d);
    let q = 1.0 + delta * (u + u * u);
    let cross = epsilon * ((a + d) * delta * (1.0 + 2.0 * u) + b * epsilon * q);
    cross * cross
        - 4.0 * (delta * (2.0 * a + b * epsilon * (1.0 + 2.0 * u))) * (d * epsilon * epsilon * q)
}

/// `(1 - εη) e^{εη}`; nonincreasing in η with maximum 1 at η = 0.
pub fn pi_bound(epsilon: f64, eta: f64) -> f64 {
    let s = epsilon * eta;
    (1.0 - s) * libm::exp(s)
}

/// Coefficient of the zeroth-order dissipation term at density `u`:
/// `(Λ - µu) δ(1+2u)/(1+δ(u+u²)) - µ`.
pub fn reaction_coefficient(params: &ModelParams, delta: f64, u: f64) -> f64 {
    let weight = delta * (1.0 + 2.0 * u) / (1.0 + delta * (u + u * u));
    (params.recruitment - params.mortality * u) * weight - params.mortality
}

/// Coefficient multiplying `λ f` at density `u`: `ε - δ(1+2u)/(1+δ(u+u²))`.
pub fn transmission_coefficient(delta: f64, epsilon: f64, u: f64) -> f64 {
    epsilon - delta * (1.0 + 2.0 * u) / (1.0 + delta * (u + u * u))
}

/// Optional user choices for δ and ε; missing entries default to their ceilings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstantsOverride {
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DerivedConstants {
    pub k: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub delta_max: f64,
    /// Ceiling on ε for the chosen δ.
    pub epsilon_max: f64,
    /// Relaxed mode with µ = 0: `K` is `‖u0‖∞` only.
    pub decay_missing: bool,
}

impl DerivedConstants {
    /// Derives `K`, the ceilings and `γ`; δ and ε default to their ceilings.
    /// Overrides are taken as given; use [`verify_admissible`] to judge them.
    pub fn derive(
        params: &ModelParams,
        u0_sup: f64,
        measure: f64,
        overrides: ConstantsOverride,
    ) -> Result<Self> {
        let k = compute_k(params, u0_sup)?;
        let delta_max = compute_delta_max(params, k.value)?;
        let delta = overrides.delta.unwrap_or(delta_max);
        let epsilon_max = compute_epsilon_max(params, k.value, delta)?;
        let epsilon = overrides.epsilon.unwrap_or(epsilon_max);
        Ok(DerivedConstants {
            k: k.value,
            delta,
            epsilon,
            gamma: compute_gamma(params, k.value, delta, measure),
            delta_max,
            epsilon_max,
            decay_missing: k.decay_missing,
        })
    }

    /// `2γ/µ`, the level the Gronwall envelope decays to.
    pub fn asymptotic_level(&self, params: &ModelParams) -> f64 {
        2.0 * self.gamma / params.mortality
    }
}

/// Result of the admissibility scan.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdmissibilityReport {
    pub n_samples: usize,
    pub k: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub delta_max: f64,
    pub epsilon_max: f64,
    pub delta_in_range: bool,
    pub epsilon_in_range: bool,
    /// Largest discriminant over the samples of `[0, K]`.
    #[cfg_attr(feature = "serde", serde(rename = "max_D"))]
    pub max_d: f64,
    pub max_d_at: f64,
    pub pass_d: bool,
    /// `Λδ(1+2K) - µ`, the closed-form bound on the reaction coefficient.
    pub lhs_36: f64,
    /// Largest sampled [`reaction_coefficient`] on `[0, K]`.
    pub reaction_coefficient_max: f64,
    /// `-µ/2`.
    pub rhs_36: f64,
    pub pass_36: bool,
    /// `ε - δ/(1 + δ(K + K²))`.
    pub lhs_37: f64,
    /// Largest sampled [`transmission_coefficient`] on `[0, K]`.
    pub transmission_coefficient_max: f64,
    pub pass_37: bool,
    /// Largest discriminant on `[0, 2K]`, reported only.
    #[cfg_attr(feature = "serde", serde(rename = "max_D_extended"))]
    pub max_d_extended: f64,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.delta_in_range && self.epsilon_in_range && self.pass_d && self.pass_36 && self.pass_37
    }
}

/// Equispaced points `0, K/(n-1), ..., K`.
pub fn sample_points(k: f64, n: usize) -> impl Iterator<Item = f64> {
    let last = (n.max(2) - 1) as f64;
    (0..n).map(move |i| {
        if i as f64 == last {
            k
        } else {
            k * i as f64 / last
        }
    })
}

/// `(u, D(u))` at `n` equispaced points of `[0, upper]`.
pub fn scan_discriminant(
    params: &ModelParams,
    delta: f64,
    epsilon: f64,
    upper: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    sample_points(upper, n)
        .map(|u| (u, discriminant(params, delta, epsilon, u)))
        .collect()
}

/// Samples `u ∈ [0, K]` at `n_samples` points and checks the three sign
/// conditions of the dissipation estimate. Out-of-range δ or ε is recorded,
/// not raised.
pub fn verify_admissible(
    params: &ModelParams,
    k: f64,
    delta: f64,
    epsilon: f64,
    n_samples: usize,
) -> Result<AdmissibilityReport> {
    if n_samples < 2 {
        return Err(Error::input("admissibility scan needs at least 2 samples"));
    }
    let delta_max = compute_delta_max(params, k)?;
    let epsilon_max = compute_epsilon_max(params, k, delta)?;

    let (mut max_d, mut max_d_at) = (f64::NEG_INFINITY, 0.0);
    let mut reaction_max = f64::NEG_INFINITY;
    let mut transmission_max = f64::NEG_INFINITY;
    for u in sample_points(k, n_samples) {
        let dval = discriminant(params, delta, epsilon, u);
        if dval > max_d {
            max_d = dval;
            max_d_at = u;
        }
        reaction_max = reaction_max.max(reaction_coefficient(params, delta, u));
        transmission_max = transmission_max.max(transmission_coefficient(delta, epsilon, u));
    }
    let max_d_extended = sample_points(2.0 * k, 2 * n_samples - 1)
        .map(|u| discriminant(params, delta, epsilon, u))
        .fold(f64::NEG_INFINITY, f64::max);

    let rhs_36 = -params.mortality / 2.0;
    let lhs_36 = params.recruitment * delta * (1.0 + 2.0 * k) - params.mortality;
    let lhs_37 = epsilon - delta / (1.0 + delta * (k + k * k));

    Ok(AdmissibilityReport {
        n_samples,
        k,
        delta,
        epsilon,
        delta_max,
        epsilon_max,
        delta_in_range: delta > 0.0 && delta <= delta_max,
        epsilon_in_range: epsilon > 0.0 && epsilon <= epsilon_max,
        max_d,
        max_d_at,
        pass_d: max_d <= ADMISSIBILITY_SLACK,
        lhs_36,
        reaction_coefficient_max: reaction_max,
        rhs_36,
        pass_36: lhs_36 - rhs_36 <= ADMISSIBILITY_SLACK
            && reaction_max - rhs_36 <= ADMISSIBILITY_SLACK,
        lhs_37,
        transmission_coefficient_max: transmission_max,
        pass_37: lhs_37 <= ADMISSIBILITY_SLACK,
        max_d_extended,
    })
}
