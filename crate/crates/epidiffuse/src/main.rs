use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use epidiffuse::commands::{self, EXIT_IO, EXIT_USAGE};
use epidiffuse::config::{load_config, ConfigError, Overrides};

#[derive(Parser)]
#[command(
    name = "epidiffuse",
    version,
    about = "Cross-diffusion epidemic simulator and bound checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run even when the hypotheses fail; invariant monitors are disabled.
    #[arg(long, global = true)]
    relaxed: bool,
    /// Output directory, overriding `output_dir` in the file.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Refinement levels for `convergence`.
    #[arg(long, global = true, default_value_t = 3)]
    levels: usize,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate and monitor the scenario.
    Run,
    /// Derive K, delta, epsilon, gamma and check admissibility.
    CheckConstants,
    /// Observed temporal and spatial orders of accuracy.
    Convergence,
    /// Tabulate the discriminant over [0, 2K].
    ScanDiscriminant,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_USAGE as u8);
    };
    let overrides = Overrides {
        relaxed: cli.relaxed,
        output_dir: cli.output.clone(),
    };
    let loaded = match load_config(path, &overrides) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            let code = if matches!(e, ConfigError::Io { .. }) {
                EXIT_IO
            } else {
                EXIT_USAGE
            };
            return ExitCode::from(code as u8);
        }
    };
    for (key, value) in &loaded.defaulted {
        eprintln!("default {key} = {value}");
    }
    if !loaded.config.params.strict {
        eprintln!("relaxed mode: hypothesis-dependent monitors are disabled");
    }
    let code = match cli.command {
        Command::Run => commands::cmd_run(&loaded, cli.json),
        Command::CheckConstants => commands::cmd_check_constants(&loaded, cli.json),
        Command::Convergence => commands::cmd_convergence(&loaded, cli.levels, cli.json),
        Command::ScanDiscriminant => commands::cmd_scan_discriminant(&loaded, cli.json),
    };
    ExitCode::from(code as u8)
}
