//! Batch front end: `cyclegas run <config>` and `cyclegas validate <config>`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 a tolerance
//! check failed (artifacts are still written).

pub mod config;
pub mod report;
pub mod run;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::error::Error;

pub use config::{load, Mode, ScenarioConfig};
pub use report::{Check, Report, Table, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "cyclegas",
    version,
    about = "Permutation-cycle statistics and condensate densities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its JSON report and CSV tables.
    Run {
        config: PathBuf,
        /// Directory for the artifacts; overrides `output.dir` (default: current directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Random seed for Monte Carlo; overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the parallel kernels.
        #[arg(long)]
        threads: Option<usize>,
        /// Omit the timestamp so identical inputs give byte-identical reports.
        #[arg(long)]
        reproducible: bool,
        /// Also write the radial grid and the kernel matrix as CSV.
        #[arg(long)]
        dump_grid: bool,
    },
    /// Check a scenario without running it and print the resolved defaults.
    Validate { config: PathBuf },
}

/// Exit code for an error raised while running a scenario.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Parse arguments, execute the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run {
            config,
            out_dir,
            seed,
            threads,
            reproducible,
            dump_grid,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    eprintln!("error: --threads must be at least 1");
                    return EXIT_CONFIG;
                }
                // A pool may already exist when called repeatedly in one process; keep it.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            run_command(&config, out_dir.as_deref(), seed, reproducible, dump_grid)
        }
    }
}

fn validate(path: &Path) -> i32 {
    match load(path) {
        Ok(cfg) => match serde_json::to_string_pretty(&cfg) {
            Ok(s) => {
                // A closed pipe (e.g. `| head`) is not an error of the check itself.
                let _ = writeln!(std::io::stdout().lock(), "ok\n{s}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_NUMERICAL
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_command(path: &Path, out_dir: Option<&Path>, seed: Option<u64>, reproducible: bool, dump_grid: bool) -> i32 {
    let mut cfg = match load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.mc.options.seed = s;
    }
    cfg.output.dump_grid |= dump_grid;
    let timestamp = if reproducible {
        None
    } else {
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    };
    let report = match run::run(&cfg, timestamp) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {} run failed: {e}", cfg.mode.name());
            return exit_code(&e);
        }
    };
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let written = match report.write(&dir, &cfg.output.name) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let mut text = String::new();
    for line in &report.summary {
        text.push_str(&format!("{line}\n"));
    }
    text.push_str("checks:\n");
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        text.push_str(&format!(
            "  [{tag}] {}: {:.3e} (tolerance {:.1e})\n",
            c.name, c.value, c.tolerance
        ));
    }
    for p in written {
        text.push_str(&format!("wrote {}\n", p.display()));
    }
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    if report.all_checks_passed {
        EXIT_OK
    } else {
        EXIT_TOLERANCE
    }
}
