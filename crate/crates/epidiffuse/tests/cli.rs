use std::path::{Path, PathBuf};
use std::process::Command;

use epidiffuse::commands::{
    RunSummary, EXIT_INTEGRITY, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VIOLATION,
};
use epidiffuse::config::{parse_config, write_config, Overrides};

const CANONICAL: &str = include_str!("../examples/canonical.cfg");

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epidiffuse"))
}

/// Canonical file with `edits` applied as `key = value` replacements or additions.
fn scenario(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut lines: Vec<String> = CANONICAL.lines().map(str::to_owned).collect();
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
    let path = dir.join(name);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn exec(args: &[&str], config: &Path, out: &Path) -> (i32, String, String) {
    let output = bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(out)
        .output()
        .unwrap();
    (
        output.status.code().unwrap(),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

fn saved_report(out: &Path) -> RunSummary {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn short_canonical_run_succeeds_and_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "c.cfg",
        &[("control.t_end", "0.05"), ("grid.cells", "50")],
    );
    let out = dir.path().join("out");
    let (code, _, stderr) = exec(&["run"], &cfg, &out);
    assert_eq!(code, EXIT_OK, "{stderr}");
    assert!(stderr.contains("default control.dt"));

    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert_eq!(
        ts.lines().next().unwrap(),
        "t,J,dJdt_estimate,rhs_34,min_u,max_u,min_v,lemma_margin,mass"
    );
    assert!(out.join("snapshot_0.000000.csv").exists());
    assert!(out.join("snapshot_0.050000.csv").exists());
    let report = saved_report(&out);
    assert_eq!(report.exit_code, code);
    assert_eq!(report.implied_exit_code(), code);
    assert!(report.admissibility.unwrap().admissible());
    // no temporary files left behind
    let names: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(
        names
            .iter()
            .all(|n| n.ends_with(".csv") || n.ends_with(".json")),
        "{names:?}"
    );
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "c.cfg",
        &[("control.t_end", "0.01"), ("grid.cells", "10")],
    );
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let (code, _, stderr) = exec(&["run"], &cfg, &blocker.join("out"));
    assert_eq!(code, EXIT_IO, "{stderr}");
}

#[test]
fn hypothesis_failure_cites_the_line_unless_relaxed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "h1.cfg",
        &[
            ("params.d", "1.5"),
            ("control.t_end", "0.01"),
            ("grid.cells", "10"),
        ],
    );
    let out = dir.path().join("out");
    let (code, _, stderr) = exec(&["run"], &cfg, &out);
    assert_eq!(code, EXIT_USAGE);
    assert!(
        stderr.contains("line 4") && stderr.contains("H1"),
        "{stderr}"
    );

    let (code, _, stderr) = exec(&["run", "--relaxed"], &cfg, &out);
    assert_eq!(code, EXIT_OK, "{stderr}");
    let report = saved_report(&out);
    assert_eq!(report.disabled.len(), 4);
}

#[test]
fn epsilon_above_ceiling_fails_check_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "eps.cfg", &[("constants.epsilon", "0.5")]);
    let out = dir.path().join("out");
    let (code, stdout, _) = exec(&["check-constants", "--json"], &cfg, &out);
    assert_eq!(code, EXIT_VIOLATION);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["pass_37"], false);
    assert!((doc["lhs_37"].as_f64().unwrap() - (0.5 - 4.0 / 11.0)).abs() < 1e-12);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("admissibility.json")).unwrap())
            .unwrap();
    assert_eq!(saved, doc);
}

#[test]
fn explicit_step_far_above_stability_is_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "dt.cfg",
        &[
            ("params.strict_mode", "false"),
            ("initial.u0", "cosine(0.5, 0.2, 1)"),
            ("initial.v0", "cosine(1.0, 0.5, 2)"),
            ("grid.cells", "50"),
            // 10 × the direct-path stable step 0.9 · 0.02² / 6
            ("control.dt", "0.0006"),
            ("control.t_end", "1.0"),
        ],
    );
    let out = dir.path().join("out");
    let (code, _, stderr) = exec(&["run"], &cfg, &out);
    assert_eq!(code, EXIT_INTEGRITY, "{stderr}");
    let report = saved_report(&out);
    assert!(report.integrity_error.is_some());
    assert_eq!(report.implied_exit_code(), EXIT_INTEGRITY);

    // the same step is refused up front in strict mode
    let strict = scenario(
        dir.path(),
        "dt2.cfg",
        &[("grid.cells", "50"), ("control.dt", "0.0006")],
    );
    let (code, _, stderr) = exec(&["run"], &strict, &out);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("stable step"), "{stderr}");
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "c.cfg", &[]);
    let out = dir.path().join("out");
    let (code, _, stderr) = exec(&["convergence", "--levels", "1"], &cfg, &out);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("at least 2 levels"), "{stderr}");

    let status = bin().arg("run").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let status = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let (code, _, _) = exec(&["run"], &dir.path().join("missing.cfg"), &out);
    assert_eq!(code, EXIT_IO);
}

#[test]
fn scan_discriminant_covers_twice_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), "c.cfg", &[]);
    let (code, stdout, _) = exec(
        &["scan-discriminant", "--json"],
        &cfg,
        &dir.path().join("out"),
    );
    assert_eq!(code, EXIT_OK);
    let doc: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let points = doc["points"].as_array().unwrap();
    assert_eq!(points.len(), 2001);
    assert_eq!(points.last().unwrap()["u"], 1.0);
    assert!(doc["max_D"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn saved_reports_reproduce_their_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "v.cfg",
        &[
            ("params.strict_mode", "false"),
            ("params.lambda_hat", "5.0"),
            ("forcing.value", "5.0"),
            ("nonlinearity.kind", "exponential_violator"),
            ("initial.v0", "constant(10.0)"),
            ("control.t_end", "0.001"),
            ("control.output_every", "1"),
        ],
    );
    // nonlinearity.m does not apply to the violator
    let text = std::fs::read_to_string(&cfg).unwrap();
    let text: String = text
        .lines()
        .filter(|l| !l.starts_with("nonlinearity.m"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = exec(&["run"], &cfg, &out);
    assert_eq!(code, EXIT_VIOLATION, "{stderr}");
    let report = saved_report(&out);
    assert!(!report.violations.is_empty());
    assert_eq!(report.implied_exit_code(), code);
}

#[test]
fn written_config_parses_back_identically() {
    let strict = Overrides::default();
    let variants = [
        CANONICAL.to_owned(),
        format!("{CANONICAL}constants.delta = 0.25\ncontrol.dt = 1e-6\nmonitor.track_j_w = true\nseed = 7\n"),
        CANONICAL
            .replace("initial.u0 = constant(0.5)", "initial.u0 = random(0.1, 0.4)")
            .replace("grid.cells = 200", "grid.cells = 20, 30")
            .replace("grid.extent = 1.0", "grid.extent = 1.0, 2.0"),
        CANONICAL
            .replace("forcing.kind = constant", "forcing.kind = sinusoidal_clamped")
            .replace("forcing.value = 1.0", "forcing.mean = 0.5\nforcing.amplitude = 0.75\nforcing.period = 2.0"),
        CANONICAL
            .replace("forcing.kind = constant", "forcing.kind = piecewise_constant")
            .replace("forcing.value = 1.0", "forcing.breakpoints = 1.0, 2.5\nforcing.values = 0.2, 1.0, 0.4")
            .replace("nonlinearity.kind = product_power", "nonlinearity.kind = sub_exponential")
            .replace("nonlinearity.m = 1.0", "nonlinearity.alpha = 0.3")
            .replace("initial.v0 = constant(1.0)", "initial.v0 = gaussian(0.5, 1.0, 0.1, 0.3)"),
    ];
    for text in variants {
        let first = parse_config(&text, &strict).unwrap_or_else(|e| panic!("{e}\n{text}"));
        let written = write_config(&first.config);
        let second = parse_config(&written, &strict).unwrap_or_else(|e| panic!("{e}\n{written}"));
        assert_eq!(first.config, second.config);
        assert_eq!(first.u0, second.u0);
        assert!(
            second.defaulted.iter().all(|(k, _)| k == "control.dt"),
            "{:?}",
            second.defaulted
        );
    }
}
