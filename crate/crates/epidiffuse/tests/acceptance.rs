//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line on stderr
//! (written directly, so it shows up without `--nocapture`) and then asserts.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use epidiffuse::commands::admissibility;
use epidiffuse::config::{parse_config, LoadedConfig, Overrides};
use epidiffuse::convergence::convergence;
use epidiffuse_core::grid::integrate;
use epidiffuse_core::model::Nonlinearity;
use epidiffuse_core::monitor::{decay_envelope, InvariantId};
use epidiffuse_core::solver::{self, RunOutcome, SolverPath};

const CANONICAL: &str = include_str!("../examples/canonical.cfg");

fn verdict(criterion: &str, pass: bool, detail: String) {
    let line = format!(
        "acceptance {criterion}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

/// Canonical file with `key = value` lines replaced or appended.
fn load(edits: &[(&str, &str)], drop: &[&str]) -> LoadedConfig {
    let mut lines: Vec<String> = CANONICAL
        .lines()
        .filter(|l| !drop.iter().any(|k| l.starts_with(k)))
        .map(str::to_owned)
        .collect();
    for (key, value) in edits {
        let line = format!("{key} = {value}");
        match lines
            .iter_mut()
            .find(|l| l.split('=').next().map(str::trim) == Some(*key))
        {
            Some(existing) => *existing = line,
            None => lines.push(line),
        }
    }
    parse_config(&(lines.join("\n") + "\n"), &Overrides::default()).unwrap()
}

fn execute(loaded: &LoadedConfig) -> (RunOutcome, Duration) {
    let start = Instant::now();
    let outcome = solver::run(&loaded.scenario(), &mut |_| {}).unwrap();
    (outcome, start.elapsed())
}

fn canonical_run() -> &'static (LoadedConfig, RunOutcome, Duration) {
    static RUN: OnceLock<(LoadedConfig, RunOutcome, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let loaded = load(&[], &[]);
        let (outcome, elapsed) = execute(&loaded);
        (loaded, outcome, elapsed)
    })
}

#[test]
fn criterion_1_constants_algebra() {
    let start = Instant::now();
    let loaded = load(&[], &[]);
    let report = admissibility(&loaded).unwrap();
    let elapsed = start.elapsed();
    let c = &loaded.constants;
    let pass = c.k == 0.5
        && c.delta_max == 0.5
        && (c.epsilon_max - 4.0 / 11.0).abs() <= 1e-12
        && (c.gamma - 2.75).abs() <= 1e-12
        && report.n_samples == 1001
        && report.max_d <= 1e-12
        && report.admissible()
        && elapsed < Duration::from_secs(1);
    verdict(
        "1 constants",
        pass,
        format!(
            "K={} delta_max={} eps_max={} gamma={} max_D={:.6e} admissible={} in {:?}",
            c.k,
            c.delta_max,
            c.epsilon_max,
            c.gamma,
            report.max_d,
            report.admissible(),
            elapsed
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_invariant_region() {
    let (loaded, out, elapsed) = canonical_run();
    let k = loaded.constants.k;
    let s = &out.report.samples;
    let min_u = s.iter().map(|x| x.min_u).fold(f64::INFINITY, f64::min);
    let max_u = s.iter().map(|x| x.max_u).fold(f64::NEG_INFINITY, f64::max);
    let min_v = s.iter().map(|x| x.min_v).fold(f64::INFINITY, f64::min);
    let margins: Vec<f64> = s.iter().filter_map(|x| x.lemma_margin).collect();
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = out.error.is_none()
        && loaded.grid.len() == 200
        && out.final_state.t == 5.0
        && margins.len() == s.len()
        && min_u >= -1e-8
        && max_u <= k + 1e-6
        && min_v >= -1e-8
        && min_margin >= -1e-6
        && *elapsed < Duration::from_secs(60);
    verdict(
        "2 invariant region",
        pass,
        format!(
            "samples={} min_u={min_u:.3e} max_u={max_u} min_v={min_v:.3e} min_margin={min_margin:.3e} in {elapsed:?}",
            s.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_lyapunov_dissipation() {
    let (loaded, out, _) = canonical_run();
    let c = &loaded.constants;
    let mu = loaded.config.params.mortality;
    let s = &out.report.samples;
    let j0 = s[0].j;
    let dissipation = out.report.count(InvariantId::Dissipation);
    let worst_envelope = s
        .iter()
        .map(|x| x.j - decay_envelope(j0, mu, c.gamma, x.t).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = out.error.is_none()
        && loaded.config.monitors.c_tol == 1.0
        && out.report.disabled.is_empty()
        && dissipation == 0
        && worst_envelope <= 1e-6 * j0;
    verdict(
        "3 dissipation",
        pass,
        format!(
            "dissipation_violations={dissipation} max(J - envelope)={worst_envelope:.3e} (allowed {:.3e})",
            1e-6 * j0
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_uniform_boundedness() {
    let loaded = load(&[("control.t_end", "50.0"), ("grid.cells", "100")], &[]);
    let (out, elapsed) = execute(&loaded);
    let c = &loaded.constants;
    let mu = loaded.config.params.mortality;
    let j0 = out.report.samples[0].j;
    let sup_j = out.report.sup_j();
    let bound = j0.max(2.0 * c.gamma / mu) * (1.0 + 1e-3);
    let pass = out.error.is_none() && out.final_state.t == 50.0 && sup_j <= bound;
    verdict(
        "4 boundedness",
        pass,
        format!(
            "sup J={sup_j} bound={bound} integrity_error={:?} in {elapsed:?}",
            out.error
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_transform_equivalence() {
    let direct = load(&[("control.t_end", "1.0")], &[]);
    // identical step on both paths: the direct-path stable step is the smaller one
    let dt = direct.dt;
    let dt_text = format!("{dt:?}");
    let direct = load(&[("control.t_end", "1.0"), ("control.dt", &dt_text)], &[]);
    let transformed = load(
        &[
            ("control.t_end", "1.0"),
            ("control.dt", &dt_text),
            ("control.path", "transformed"),
        ],
        &[],
    );
    assert_eq!(transformed.config.control.path, SolverPath::Transformed);
    let (a, _) = execute(&direct);
    let (b, _) = execute(&transformed);
    let diff = a
        .final_state
        .v
        .zip_with(&b.final_state.v, |x, y| x - y)
        .unwrap()
        .max_abs();
    let pass = a.error.is_none()
        && b.error.is_none()
        && a.dt == b.dt
        && a.final_state.t == 1.0
        && b.final_state.t == 1.0
        && diff <= 1e-6;
    verdict(
        "5 transform equivalence",
        pass,
        format!("max|v_direct - v_transformed|={diff:.3e} dt={}", a.dt),
    );
    assert!(pass);
}

#[test]
fn criterion_6_conservation() {
    let loaded = load(
        &[
            ("params.Lambda", "0.0"),
            ("params.mu", "0.0"),
            ("params.lambda_hat", "0.0"),
            ("params.strict_mode", "false"),
            ("forcing.value", "0.0"),
            ("initial.u0", "cosine(0.5, 0.3, 1)"),
            ("initial.v0", "gaussian(0.2, 1.0, 0.1, 0.3)"),
            ("grid.cells", "100"),
            ("control.t_end", "1.0"),
        ],
        &[],
    );
    let initial = integrate(&loaded.u0) + integrate(&loaded.v0);
    let (out, _) = execute(&loaded);
    let drift = out
        .report
        .samples
        .iter()
        .map(|s| ((s.mass - initial) / initial).abs())
        .fold(0.0, f64::max);
    let pass = out.error.is_none() && out.final_state.t == 1.0 && drift <= 1e-10;
    verdict(
        "6 conservation",
        pass,
        format!("max relative mass drift={drift:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_discretization_orders() {
    let loaded = load(&[], &[]);
    let start = Instant::now();
    let table = convergence(&loaded, 3, 0).unwrap();
    let elapsed = start.elapsed();
    let pass = (0.8..=1.2).contains(&table.temporal_order)
        && (1.8..=2.2).contains(&table.spatial_order)
        && elapsed < Duration::from_secs(300);
    verdict(
        "7 orders",
        pass,
        format!(
            "temporal={:.4} spatial={:.4} in {elapsed:?}",
            table.temporal_order, table.spatial_order
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8a_epsilon_above_ceiling_is_rejected() {
    let loaded = load(&[("constants.epsilon", "0.5")], &[]);
    let report = admissibility(&loaded).unwrap();
    let pass =
        !report.admissible() && !report.pass_37 && !report.epsilon_in_range && report.lhs_37 > 0.0;
    verdict(
        "8a epsilon override",
        pass,
        format!(
            "admissible={} pass_37={} witness epsilon - delta/(1+delta(K+K^2))={:.6}",
            report.admissible(),
            report.pass_37,
            report.lhs_37
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8b_violator_breaks_dissipation() {
    let loaded = load(
        &[
            ("params.strict_mode", "false"),
            ("params.lambda_hat", "5.0"),
            ("forcing.value", "5.0"),
            ("nonlinearity.kind", "exponential_violator"),
            ("initial.v0", "constant(10.0)"),
            ("control.t_end", "10.0"),
            ("control.output_every", "1"),
        ],
        &["nonlinearity.m"],
    );
    let (out, elapsed) = execute(&loaded);
    let first_violation = out
        .report
        .violations
        .iter()
        .filter(|v| v.invariant == InvariantId::Dissipation)
        .map(|v| v.t)
        .fold(f64::INFINITY, f64::min);
    let integrity = out.error.as_ref().filter(|e| e.is_integrity());
    let pass = first_violation < 10.0 || integrity.is_some_and(|_| out.final_state.t < 10.0);
    verdict(
        "8b violator",
        pass,
        format!(
            "dissipation_violations={} first at t={first_violation:.3e} integrity_error={:?} in {elapsed:?}",
            out.report.count(InvariantId::Dissipation),
            out.error
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8c_growth_ratios() {
    let violator = Nonlinearity::ExponentialViolator
        .growth_ratio(1.0, 200.0)
        .unwrap();
    let power = Nonlinearity::ProductPower { m: 1.0 }
        .growth_ratio(1.0, 1e4)
        .unwrap();
    let sub = Nonlinearity::SubExponential { alpha: 0.5 }
        .growth_ratio(1.0, 1e4)
        .unwrap();
    let pass = violator > 0.05 && power < 0.05 && sub < 0.05;
    verdict(
        "8c growth ratios",
        pass,
        format!("violator(v=200)={violator:.4} product_power(v=1e4)={power:.3e} sub_exponential(v=1e4)={sub:.4}"),
    );
    assert!(pass);
}
