//! Model parameters, forcing, reaction terms, initial data and hypothesis checks.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{extrema, Field, Grid};
use crate::{Error, Result};

/// Probe height for the growth-ratio witness reported when the growth condition fails.
pub const H2_PROBE_V: f64 = 1.0e4;
/// Reference level for `log(1 + f)/v` at [`H2_PROBE_V`]; compliant kinds with
/// default exponents sit below it, the violator sits near 1.
pub const H2_RATIO_CEILING: f64 = 0.05;

/// Physical constants of the system.
///
/// `strict` selects whether the structural hypotheses (positive diffusivities,
/// `d - a ≥ b`, `µ > 0`, `Λ ≥ 0`) are enforced. Relaxed mode exists for
/// conservation and stress scenarios; monitors that depend on a violated
/// hypothesis are switched off there.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    /// Diffusivity of `u`.
    pub a: f64,
    /// Cross-diffusivity: `b Δu` drives `v`.
    pub b: f64,
    /// Diffusivity of `v`.
    pub d: f64,
    /// Recruitment rate Λ.
    pub recruitment: f64,
    /// Removal rate µ.
    pub mortality: f64,
    /// Upper bound λ̂ on the transmission forcing.
    pub lambda_max: f64,
    pub strict: bool,
}

impl ModelParams {
    /// Rejects non-finite constants and a negative forcing ceiling.
    pub fn check_finite(&self) -> Result<()> {
        let named = [
            ("a", self.a),
            ("b", self.b),
            ("d", self.d),
            ("Lambda", self.recruitment),
            ("mu", self.mortality),
            ("lambda_hat", self.lambda_max),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return Err(Error::input(alloc::format!(
                    "parameter {name} is not finite"
                )));
            }
        }
        if self.lambda_max < 0.0 {
            return Err(Error::Domain {
                what: "lambda_hat",
                value: self.lambda_max,
            });
        }
        Ok(())
    }

    /// Λ/µ, the disease-free equilibrium of `u`. `None` when µ ≤ 0.
    pub fn u_equilibrium(&self) -> Option<f64> {
        (self.mortality > 0.0).then(|| self.recruitment / self.mortality)
    }

    /// `b/(d - a)`, the slope of the invariant line. `None` when `d ≤ a`.
    pub fn coupling(&self) -> Option<f64> {
        (self.d > self.a).then(|| self.b / (self.d - self.a))
    }

    /// Pointwise lower bound on `v` in the invariant region, `b/(d-a)·(Λ/µ - u)`.
    pub fn v_floor(&self, u: f64) -> Option<f64> {
        Some(self.coupling()? * (self.u_equilibrium()? - u))
    }
}

/// Transmission forcing λ(t), clamped into `[0, λ̂]` at evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Forcing {
    Constant(f64),
    /// `values[k]` applies on `(breakpoints[k-1], breakpoints[k]]`, the first on
    /// `[0, breakpoints[0]]` and the last on `(breakpoints[n-1], ∞)`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// `mean + amplitude · sin(2πt/period)`.
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
}

impl Forcing {
    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::input(
                "piecewise forcing needs one more value than breakpoints",
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::input(
                "piecewise breakpoints must be strictly increasing",
            ));
        }
        Ok(Forcing::PiecewiseConstant {
            breakpoints,
            values,
        })
    }

    pub fn check(&self) -> Result<()> {
        let finite = match self {
            Forcing::Constant(c) => c.is_finite(),
            Forcing::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if values.len() != breakpoints.len() + 1 {
                    return Err(Error::input(
                        "piecewise forcing needs one more value than breakpoints",
                    ));
                }
                breakpoints.iter().chain(values).all(|x| x.is_finite())
            }
            Forcing::Sinusoidal {
                mean,
                amplitude,
                period,
            } => {
                if !(*period > 0.0) {
                    return Err(Error::Domain {
                        what: "forcing period",
                        value: *period,
                    });
                }
                mean.is_finite() && amplitude.is_finite() && period.is_finite()
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::input("forcing parameters must be finite"))
        }
    }

    fn raw(&self, t: f64) -> f64 {
        match self {
            Forcing::Constant(c) => *c,
            Forcing::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let k = breakpoints.iter().take_while(|&&b| b < t).count();
                values[k]
            }
            Forcing::Sinusoidal {
                mean,
                amplitude,
                period,
            } => mean + amplitude * libm::sin(2.0 * PI * t / period),
        }
    }

    /// λ(t) clamped into `[0, lambda_max]`.
    pub fn eval(&self, t: f64, lambda_max: f64) -> f64 {
        self.raw(t).clamp(0.0, lambda_max.max(0.0))
    }
}

/// λ(t) for the given forcing, never outside `[0, λ̂]`.
pub fn eval_lambda(forcing: &Forcing, params: &ModelParams, t: f64) -> f64 {
    forcing.eval(t, params.lambda_max)
}

/// Reaction term `f(u, v)`; every kind vanishes at `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Nonlinearity {
    /// `u · v^m`, `m ≥ 1`.
    ProductPower { m: f64 },
    /// `u · (exp(v^α) - 1)`, `0 < α < 1`.
    SubExponential { alpha: f64 },
    /// `u · (exp(v) - 1)`; grows too fast for the boundedness argument.
    ExponentialViolator,
}

impl Nonlinearity {
    pub fn check(&self) -> Result<()> {
        match *self {
            Nonlinearity::ProductPower { m } if !(m >= 1.0 && m.is_finite()) => {
                Err(Error::Domain {
                    what: "exponent m",
                    value: m,
                })
            }
            Nonlinearity::SubExponential { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::Domain {
                    what: "exponent alpha",
                    value: alpha,
                })
            }
            _ => Ok(()),
        }
    }

    /// Whether `log(1 + f(·, v))/v → 0` holds for this kind.
    pub fn satisfies_h2(&self) -> bool {
        !matches!(self, Nonlinearity::ExponentialViolator)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::ProductPower { .. } => "product_power",
            Nonlinearity::SubExponential { .. } => "sub_exponential",
            Nonlinearity::ExponentialViolator => "exponential_violator",
        }
    }

    /// `f(u, v)` without domain checks; callers pass `u, v ≥ 0`.
    #[inline]
    pub(crate) fn rate(&self, u: f64, v: f64) -> f64 {
        match *self {
            Nonlinearity::ProductPower { m } => {
                if m == 1.0 {
                    u * v
                } else {
                    u * libm::pow(v, m)
                }
            }
            Nonlinearity::SubExponential { alpha } => u * libm::expm1(libm::pow(v, alpha)),
            Nonlinearity::ExponentialViolator => u * libm::expm1(v),
        }
    }

    /// `f(u, v)` for nonnegative densities.
    pub fn eval(&self, u: f64, v: f64) -> Result<f64> {
        check_density("u", u)?;
        check_density("v", v)?;
        Ok(self.rate(u, v))
    }

    /// `log(1 + f(u_probe, v)) / v`, evaluated in log space so large `v` does not overflow.
    pub fn growth_ratio(&self, u_probe: f64, v: f64) -> Result<f64> {
        check_density("u_probe", u_probe)?;
        if !(v > 0.0) {
            return Err(Error::Domain {
                what: "v",
                value: v,
            });
        }
        let log1p_f = match *self {
            Nonlinearity::ProductPower { m } => {
                let f = self.rate(u_probe, v);
                if f.is_finite() {
                    libm::log1p(f)
                } else {
                    libm::log(u_probe) + m * libm::log(v)
                }
            }
            Nonlinearity::SubExponential { alpha } => log1p_u_expm1(u_probe, libm::pow(v, alpha)),
            Nonlinearity::ExponentialViolator => log1p_u_expm1(u_probe, v),
        };
        Ok(log1p_f / v)
    }
}

// log(1 + u (e^s - 1)) for s ≥ 0 without forming e^s when it is large.
fn log1p_u_expm1(u: f64, s: f64) -> f64 {
    if s < 30.0 {
        libm::log1p(u * libm::expm1(s))
    } else {
        s + libm::log(u + (1.0 - u) * libm::exp(-s))
    }
}

fn check_density(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// How an initial field is laid out on the grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FieldInit {
    Constant(f64),
    /// `mean + amplitude · cos(kx π x / Lx) · cos(ky π y / Ly)`; satisfies the
    /// no-flux condition for integer modes.
    Cosine {
        mean: f64,
        amplitude: f64,
        modes: [u32; 2],
    },
    /// `base + amplitude · exp(-|x - center|² / (2 width²))`.
    Gaussian {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// Uniform draws in `[lo, hi)` from the scenario seed.
    Random {
        lo: f64,
        hi: f64,
    },
    /// One value per cell in grid index order.
    Values(Vec<f64>),
}

impl FieldInit {
    /// Samples the descriptor at cell centers. `stream` separates the random
    /// sequences of `u0` and `v0` drawn from the same seed.
    pub fn sample(&self, grid: &Grid, seed: u64, stream: u64) -> Result<Field> {
        let grid = *grid;
        match self {
            FieldInit::Constant(c) => Field::constant(grid, *c),
            FieldInit::Cosine {
                mean,
                amplitude,
                modes,
            } => {
                let ext = grid.extents();
                let ly = if grid.dim() == 2 { ext[1] } else { 1.0 };
                let (lx, [kx, ky]) = (ext[0], *modes);
                Field::from_fn(grid, |[x, y]| {
                    let cy = if grid.dim() == 2 {
                        libm::cos(ky as f64 * PI * y / ly)
                    } else {
                        1.0
                    };
                    mean + amplitude * libm::cos(kx as f64 * PI * x / lx) * cy
                })
            }
            FieldInit::Gaussian {
                base,
                amplitude,
                center,
                width,
            } => {
                if !(*width > 0.0) {
                    return Err(Error::Domain {
                        what: "gaussian width",
                        value: *width,
                    });
                }
                Field::from_fn(grid, |[x, y]| {
                    let dy = if grid.dim() == 2 { y - center[1] } else { 0.0 };
                    let r2 = (x - center[0]) * (x - center[0]) + dy * dy;
                    base + amplitude * libm::exp(-r2 / (2.0 * width * width))
                })
            }
            FieldInit::Random { lo, hi } => {
                if !(lo <= hi) {
                    return Err(Error::input("random initial data needs lo <= hi"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let values = (0..grid.len())
                    .map(|_| lo + (hi - lo) * rng.gen::<f64>())
                    .collect();
                Field::new(grid, values)
            }
            FieldInit::Values(values) => Field::new(grid, values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InitialData {
    pub u0: FieldInit,
    pub v0: FieldInit,
}

impl InitialData {
    pub fn sample(&self, grid: &Grid, seed: u64) -> Result<(Field, Field)> {
        Ok((
            self.u0.sample(grid, seed, 0)?,
            self.v0.sample(grid, seed, 1)?,
        ))
    }
}

/// The hypotheses checked before a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Hypothesis {
    /// Positive diffusivities, `d - a ≥ b`, `µ > 0`, `Λ ≥ 0`.
    Structure,
    /// Sub-exponential growth of `f` in `v`.
    Growth,
    /// `‖u0‖∞ ≤ Λ/µ`.
    InitialBound,
    /// `u0 ≥ 0` and `v0 ≥ 0`.
    NonnegativeData,
    /// `v0(x) ≥ b/(d-a)·(Λ/µ - u0(x))` at every cell.
    InvariantLinePointwise,
    /// `v0 ≥ b/(d-a)·(Λ/µ - ‖u0‖∞)`; weaker than the pointwise form, reported only.
    InvariantLineSupNorm,
}

impl Hypothesis {
    pub fn label(&self) -> &'static str {
        match self {
            Hypothesis::Structure => "H1",
            Hypothesis::Growth => "H2",
            Hypothesis::InitialBound => "H3",
            Hypothesis::NonnegativeData => "nonnegative initial data",
            Hypothesis::InvariantLinePointwise => "invariant line (pointwise)",
            Hypothesis::InvariantLineSupNorm => "invariant line (sup-norm form)",
        }
    }
}

/// Where and by how much a hypothesis failed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Witness {
    pub detail: String,
    pub cell: Option<usize>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    /// Informational checks never gate a run.
    pub informational: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisReport {
    pub strict: bool,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn get(&self, hypothesis: Hypothesis) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == hypothesis)
    }

    pub fn passed(&self, hypothesis: Hypothesis) -> bool {
        self.get(hypothesis).is_some_and(|c| c.passed)
    }

    /// Failed checks that gate a run.
    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed && !c.informational)
    }

    pub fn all_pass(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Evaluates every hypothesis on sampled initial data. Failures are data;
/// only non-finite inputs are errors.
pub fn validate_hypotheses(
    params: &ModelParams,
    nonlinearity: &Nonlinearity,
    u0: &Field,
    v0: &Field,
) -> Result<HypothesisReport> {
    params.check_finite()?;
    nonlinearity.check()?;
    if u0.grid() != v0.grid() {
        return Err(Error::input("u0 and v0 live on different grids"));
    }
    let mut checks = Vec::with_capacity(6);

    checks.push(structure_check(params));

    let (u_min, u_max) = extrema(u0);
    let k_probe = params
        .u_equilibrium()
        .map_or(u_max, |eq| eq.max(u_max))
        .max(1.0);
    let ratio = nonlinearity.growth_ratio(k_probe, H2_PROBE_V)?;
    // The limit is a property of the kind; a finite probe would wrongly reject
    // sub-exponential rates with alpha close to 1.
    let growth_ok = nonlinearity.satisfies_h2();
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::Growth,
        passed: growth_ok,
        informational: false,
        witness: (!growth_ok).then(|| Witness {
            detail: alloc::format!(
                "{}: log(1+f({k_probe}, v))/v at v = {H2_PROBE_V}",
                nonlinearity.name()
            ),
            cell: None,
            value: ratio,
            bound: H2_RATIO_CEILING,
        }),
    });

    let eq = params.u_equilibrium();
    let sup_cell = argmax(u0.values());
    let h3_ok = eq.is_some_and(|eq| u_max <= eq);
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::InitialBound,
        passed: h3_ok,
        informational: false,
        witness: (!h3_ok).then(|| match eq {
            Some(eq) => Witness {
                detail: String::from("sup u0 exceeds Lambda/mu"),
                cell: Some(sup_cell),
                value: u_max,
                bound: eq,
            },
            None => Witness {
                detail: String::from("Lambda/mu needs mu > 0"),
                cell: None,
                value: params.mortality,
                bound: 0.0,
            },
        }),
    });

    let (v_min, _) = extrema(v0);
    let nonneg_ok = u_min >= 0.0 && v_min >= 0.0;
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::NonnegativeData,
        passed: nonneg_ok,
        informational: false,
        witness: (!nonneg_ok).then(|| {
            let (name, values, min) = if u_min < v_min {
                ("u0", u0.values(), u_min)
            } else {
                ("v0", v0.values(), v_min)
            };
            Witness {
                detail: alloc::format!("{name} is negative"),
                cell: Some(argmin(values)),
                value: min,
                bound: 0.0,
            }
        }),
    });

    checks.push(match (params.coupling(), eq) {
        (Some(c), Some(eq)) => {
            let (cell, margin) = u0
                .values()
                .iter()
                .zip(v0.values())
                .map(|(&u, &v)| v - c * (eq - u))
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |best, (i, m)| if m < best.1 { (i, m) } else { best },
                );
            let ok = margin >= 0.0;
            HypothesisCheck {
                hypothesis: Hypothesis::InvariantLinePointwise,
                passed: ok,
                informational: false,
                witness: (!ok).then(|| Witness {
                    detail: String::from("v0 below b/(d-a)(Lambda/mu - u0)"),
                    cell: Some(cell),
                    value: v0.values()[cell],
                    bound: c * (eq - u0.values()[cell]),
                }),
            }
        }
        _ => unavailable(Hypothesis::InvariantLinePointwise, false, params),
    });

    checks.push(match (params.coupling(), eq) {
        (Some(c), Some(eq)) => {
            let bound = c * (eq - u_max);
            let ok = v_min >= bound;
            HypothesisCheck {
                hypothesis: Hypothesis::InvariantLineSupNorm,
                passed: ok,
                informational: true,
                witness: (!ok).then(|| Witness {
                    detail: String::from("inf v0 below b/(d-a)(Lambda/mu - sup u0)"),
                    cell: Some(argmin(v0.values())),
                    value: v_min,
                    bound,
                }),
            }
        }
        _ => unavailable(Hypothesis::InvariantLineSupNorm, true, params),
    });

    Ok(HypothesisReport {
        strict: params.strict,
        checks,
    })
}

fn structure_check(p: &ModelParams) -> HypothesisCheck {
    let clauses: [(&str, f64, f64, bool); 5] = [
        ("a > 0", p.a, 0.0, p.a > 0.0),
        ("b > 0", p.b, 0.0, p.b > 0.0),
        ("d - a >= b", p.d - p.a, p.b, p.d - p.a >= p.b),
        ("mu > 0", p.mortality, 0.0, p.mortality > 0.0),
        ("Lambda >= 0", p.recruitment, 0.0, p.recruitment >= 0.0),
    ];
    let failed = clauses.iter().find(|c| !c.3);
    HypothesisCheck {
        hypothesis: Hypothesis::Structure,
        passed: failed.is_none(),
        informational: false,
        witness: failed.map(|&(detail, value, bound, _)| Witness {
            detail: String::from(detail),
            cell: None,
            value,
            bound,
        }),
    }
}

fn unavailable(hypothesis: Hypothesis, informational: bool, p: &ModelParams) -> HypothesisCheck {
    let witness = if p.d > p.a {
        Witness {
            detail: String::from("invariant line needs mu > 0"),
            cell: None,
            value: p.mortality,
            bound: 0.0,
        }
    } else {
        Witness {
            detail: String::from("invariant line needs d - a > 0"),
            cell: None,
            value: p.d - p.a,
            bound: 0.0,
        }
    };
    HypothesisCheck {
        hypothesis,
        passed: false,
        informational,
        witness: Some(witness),
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |best, (i, &x)| if x < best.1 { (i, x) } else { best },
        )
        .0
}
