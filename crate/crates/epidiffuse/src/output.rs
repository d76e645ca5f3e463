//! File sinks. Every file is written to a temporary sibling and renamed into
//! place, so an interrupted run never leaves a truncated CSV behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use epidiffuse_core::monitor::MonitorSample;
use epidiffuse_core::solver::State;

/// Column order of `timeseries.csv`. Downstream tooling relies on it.
pub const TIMESERIES_COLUMNS: [&str; 9] = [
    "t",
    "J",
    "dJdt_estimate",
    "rhs_34",
    "min_u",
    "max_u",
    "min_v",
    "lemma_margin",
    "mass",
];

pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |x| x.to_string())
}

/// One row per sample; an extra `J_w` column is appended when tracked.
pub fn timeseries_csv(samples: &[MonitorSample]) -> String {
    let with_w = samples.iter().any(|s| s.j_w.is_some());
    let mut out = TIMESERIES_COLUMNS.join(",");
    if with_w {
        out.push_str(",J_w");
    }
    out.push('\n');
    for s in samples {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.t,
            s.j,
            opt(s.dj_dt),
            s.rhs_34,
            s.min_u,
            s.max_u,
            s.min_v,
            opt(s.lemma_margin),
            s.mass
        );
        if with_w {
            let _ = write!(out, ",{}", opt(s.j_w));
        }
        out.push('\n');
    }
    out
}

/// One row per cell: index, cell-center coordinates, `u`, `v`.
pub fn snapshot_csv(state: &State) -> String {
    let grid = state.grid();
    let two_d = grid.dim() == 2;
    let mut out = String::from(if two_d {
        "cell,i,j,x,y,u,v\n"
    } else {
        "cell,x,u,v\n"
    });
    for (idx, (u, v)) in state.u.values().iter().zip(state.v.values()).enumerate() {
        let [x, y] = grid.center(idx);
        if two_d {
            let [i, j] = grid.position(idx);
            let _ = writeln!(out, "{idx},{i},{j},{x},{y},{u},{v}");
        } else {
            let _ = writeln!(out, "{idx},{x},{u},{v}");
        }
    }
    out
}

pub fn snapshot_path(dir: &Path, t: f64) -> PathBuf {
    dir.join(format!("snapshot_{t:.6}.csv"))
}
