//! Subcommand bodies. Each returns a process exit code; nothing here calls
//! `std::process::exit`.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use epidiffuse_core::constants::{
    scan_discriminant, verify_admissible, AdmissibilityReport, DerivedConstants, DEFAULT_SAMPLES,
};
use epidiffuse_core::model::HypothesisReport;
use epidiffuse_core::monitor::{DisabledMonitor, Violation};
use epidiffuse_core::solver::{self, State};

use crate::config::LoadedConfig;
use crate::convergence::{self, ConvergenceTable};
use crate::output::{snapshot_csv, snapshot_path, timeseries_csv, write_atomic};

pub const EXIT_OK: i32 = 0;
/// Configuration, usage or input error.
pub const EXIT_USAGE: i32 = 1;
/// Monitor violations or inadmissible constants.
pub const EXIT_VIOLATION: i32 = 2;
/// NaN, infinity or overflow during a run.
pub const EXIT_INTEGRITY: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub exit_code: i32,
    pub integrity_error: Option<String>,
    pub steps: u64,
    pub dt: f64,
    pub final_t: f64,
    pub constants: DerivedConstants,
    pub admissibility: Option<AdmissibilityReport>,
    pub hypotheses: HypothesisReport,
    pub violations: Vec<Violation>,
    pub disabled: Vec<DisabledMonitor>,
    pub reaction_clamps: u64,
    pub samples: usize,
    pub j0: Option<f64>,
    pub sup_j: Option<f64>,
    pub defaulted: Vec<(String, String)>,
}

impl RunSummary {
    /// Exit code implied by the report content alone.
    pub fn implied_exit_code(&self) -> i32 {
        exit_code(self.integrity_error.is_some(), self.violations.len())
    }
}

/// Integrity errors take precedence over violations.
pub fn exit_code(integrity_error: bool, violations: usize) -> i32 {
    if integrity_error {
        EXIT_INTEGRITY
    } else if violations > 0 {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    }
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub final_state: State,
    pub timeseries: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub report: PathBuf,
}

fn io_context(path: &Path, e: io::Error) -> io::Error {
    io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> io::Result<()> {
    write_atomic(path, contents).map_err(|e| io_context(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Runs the scenario and writes `timeseries.csv`, snapshots and `report.json`
/// into the configured output directory.
pub fn execute_run(loaded: &LoadedConfig) -> Result<RunArtifacts, RunError> {
    let dir = &loaded.config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| RunError::Io(io_context(dir, e)))?;

    let scenario = loaded.scenario();
    let snapshot_every = loaded.config.control.snapshot_every;
    let mut snapshots = Vec::new();
    let mut write_err = None;
    let mut sample_index = 0usize;
    let outcome = {
        let mut observer = |state: &State| {
            let due = sample_index == 0
                || (snapshot_every > 0 && sample_index.is_multiple_of(snapshot_every));
            sample_index += 1;
            if due && write_err.is_none() {
                let path = snapshot_path(dir, state.t);
                match write_file(&path, snapshot_csv(state).as_bytes()) {
                    Ok(()) => snapshots.push(path),
                    Err(e) => write_err = Some(e),
                }
            }
        };
        solver::run(&scenario, &mut observer).map_err(RunError::Model)?
    };
    if let Some(e) = write_err {
        return Err(RunError::Io(e));
    }
    let final_path = snapshot_path(dir, outcome.final_state.t);
    if snapshots.last() != Some(&final_path) {
        write_file(&final_path, snapshot_csv(&outcome.final_state).as_bytes())
            .map_err(RunError::Io)?;
        snapshots.push(final_path);
    }

    let timeseries = dir.join("timeseries.csv");
    write_file(
        &timeseries,
        timeseries_csv(&outcome.report.samples).as_bytes(),
    )
    .map_err(RunError::Io)?;

    let c = &loaded.constants;
    let admissibility = verify_admissible(
        &loaded.config.params,
        c.k,
        c.delta,
        c.epsilon,
        DEFAULT_SAMPLES,
    )
    .ok();
    let report = &outcome.report;
    let mut summary = RunSummary {
        exit_code: EXIT_OK,
        integrity_error: outcome.error.as_ref().map(|e| e.to_string()),
        steps: outcome.steps_taken,
        dt: outcome.dt,
        final_t: outcome.final_state.t,
        constants: *c,
        admissibility,
        hypotheses: loaded.hypotheses.clone(),
        violations: report.violations.clone(),
        disabled: report.disabled.clone(),
        reaction_clamps: report.reaction_clamps,
        samples: report.samples.len(),
        j0: report.samples.first().map(|s| s.j),
        sup_j: (!report.samples.is_empty()).then(|| report.sup_j()),
        defaulted: loaded.defaulted.clone(),
    };
    summary.exit_code = summary.implied_exit_code();
    let report_path = dir.join("report.json");
    write_file(&report_path, to_json(&summary).as_bytes()).map_err(RunError::Io)?;

    Ok(RunArtifacts {
        summary,
        final_state: outcome.final_state,
        timeseries,
        snapshots,
        report: report_path,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("write failed: {0}")]
    Io(io::Error),
    #[error("{0}")]
    Model(epidiffuse_core::Error),
}

pub fn cmd_run(loaded: &LoadedConfig, json: bool) -> i32 {
    match execute_run(loaded) {
        Ok(art) => {
            let s = &art.summary;
            if json {
                print!("{}", to_json(s));
            } else {
                println!("steps {} dt {} t_end {}", s.steps, s.dt, s.final_t);
                println!(
                    "J(0) {} sup J {} samples {}",
                    fmt_opt(s.j0),
                    fmt_opt(s.sup_j),
                    s.samples
                );
                for d in &s.disabled {
                    println!("disabled {}: {}", d.monitor.as_str(), d.reason);
                }
                for v in &s.violations {
                    println!(
                        "violation {} t {} excess {} tolerance {}",
                        v.invariant.as_str(),
                        v.t,
                        v.witness,
                        v.tolerance
                    );
                }
                if let Some(e) = &s.integrity_error {
                    println!("integrity error: {e}");
                }
                println!("report {}", art.report.display());
            }
            s.exit_code
        }
        Err(RunError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
        Err(RunError::Model(e)) => {
            eprintln!("error: {e}");
            if e.is_integrity() {
                EXIT_INTEGRITY
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |x| x.to_string())
}

/// Admissibility of the configured constants over `u ∈ [0, K]`.
pub fn admissibility(loaded: &LoadedConfig) -> Result<AdmissibilityReport, epidiffuse_core::Error> {
    let c = &loaded.constants;
    verify_admissible(
        &loaded.config.params,
        c.k,
        c.delta,
        c.epsilon,
        DEFAULT_SAMPLES,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSummary {
    pub exit_code: i32,
    pub gamma: f64,
    #[serde(flatten)]
    pub report: AdmissibilityReport,
}

pub fn cmd_check_constants(loaded: &LoadedConfig, json: bool) -> i32 {
    let report = match admissibility(loaded) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let summary = ConstantsSummary {
        exit_code: if report.admissible() {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        },
        gamma: loaded.constants.gamma,
        report,
    };
    let dir = &loaded.config.output_dir;
    let path = dir.join("admissibility.json");
    if let Err(e) =
        std::fs::create_dir_all(dir).and_then(|_| write_atomic(&path, to_json(&summary).as_bytes()))
    {
        eprintln!("error: {}", io_context(&path, e));
        return EXIT_IO;
    }
    if json {
        print!("{}", to_json(&summary));
    } else {
        print_constants(&summary);
    }
    summary.exit_code
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "ok"
    } else {
        "FAIL"
    }
}

fn print_constants(s: &ConstantsSummary) {
    let r = &s.report;
    println!("K           {}", r.k);
    println!(
        "delta       {} (max {}) {}",
        r.delta,
        r.delta_max,
        verdict(r.delta_in_range)
    );
    println!(
        "epsilon     {} (max {}) {}",
        r.epsilon,
        r.epsilon_max,
        verdict(r.epsilon_in_range)
    );
    println!("gamma       {}", s.gamma);
    println!(
        "max D       {} at u = {} over {} samples {}",
        r.max_d,
        r.max_d_at,
        r.n_samples,
        verdict(r.pass_d)
    );
    println!(
        "reaction    Lambda*delta*(1+2K) - mu = {} (sampled max {}) vs {} {}",
        r.lhs_36,
        r.reaction_coefficient_max,
        r.rhs_36,
        verdict(r.pass_36)
    );
    println!(
        "transmission epsilon - delta/(1+delta(K+K^2)) = {} (sampled max {}) {}",
        r.lhs_37,
        r.transmission_coefficient_max,
        verdict(r.pass_37)
    );
    println!("max D on [0, 2K] {}", r.max_d_extended);
}

/// Prints `u, D(u)` over `[0, 2K]`; the exit code reflects `[0, K]` only.
pub fn cmd_scan_discriminant(loaded: &LoadedConfig, json: bool) -> i32 {
    let c = &loaded.constants;
    let params = &loaded.config.params;
    let rows = scan_discriminant(
        params,
        c.delta,
        c.epsilon,
        2.0 * c.k,
        2 * DEFAULT_SAMPLES - 1,
    );
    let worst_inside = rows
        .iter()
        .filter(|(u, _)| *u <= c.k)
        .map(|&(_, d)| d)
        .fold(f64::NEG_INFINITY, f64::max);
    let code = if worst_inside <= epidiffuse_core::constants::ADMISSIBILITY_SLACK {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    };
    if json {
        let points: Vec<_> = rows
            .iter()
            .map(|&(u, d)| serde_json::json!({ "u": u, "D": d }))
            .collect();
        let doc = serde_json::json!({ "K": c.k, "max_D": worst_inside, "points": points });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    } else {
        println!("u,D");
        for (u, d) in rows {
            println!("{u},{d}");
        }
    }
    code
}

/// Worker count from `EPIDIFFUSE_THREADS`; unset, empty or 0 means serial.
pub fn threads_from_env() -> usize {
    std::env::var("EPIDIFFUSE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

pub fn cmd_convergence(loaded: &LoadedConfig, levels: usize, json: bool) -> i32 {
    let table: ConvergenceTable = match convergence::convergence(loaded, levels, threads_from_env())
    {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return if e.is_integrity() {
                EXIT_INTEGRITY
            } else {
                EXIT_USAGE
            };
        }
    };
    if json {
        print!("{}", to_json(&table));
    } else {
        for (name, rows) in [("temporal", &table.temporal), ("spatial", &table.spatial)] {
            println!("{name}: level,cells,dt,error,order");
            for r in rows.iter() {
                println!(
                    "{},{},{},{},{}",
                    r.level,
                    r.cells,
                    r.dt,
                    r.error,
                    fmt_opt(r.order)
                );
            }
        }
        println!("temporal order {}", table.temporal_order);
        println!("spatial order {}", table.spatial_order);
    }
    EXIT_OK
}
