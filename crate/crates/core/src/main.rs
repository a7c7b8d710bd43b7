use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iscc::driver::DriverOptions;
use iscc::harness::{emit_convergence_trace, run_experiment, save_rows, ExperimentSpec};
use iscc::SystemConfig;

#[derive(Parser)]
#[command(name = "iscc", version, about = "Joint beamforming and offloading experiments for three-tier ISCC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write one CSV row per (scheme, value, trial).
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV; defaults to the spec's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the spec's seed base.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the alternating algorithm once and write its convergence trace.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Relative outer-loop tolerance (`inf` stops after one iteration).
        #[arg(long, default_value_t = 1e-3)]
        outer_tol: f64,
    },
    /// Check a configuration file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn fail(code: u8, e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { spec, out, threads, seed } => {
            let (mut spec, base) = match ExperimentSpec::load(&spec) {
                Ok(v) => v,
                Err(e) => return fail(CONFIG_ERROR, e),
            };
            if let Some(seed) = seed {
                spec.seed_base = seed;
            }
            let Some(out) = out.or_else(|| spec.output.clone()) else {
                return fail(CONFIG_ERROR, "no output path: pass --out or set `output` in the spec");
            };
            let rows = match run_experiment(&spec, &base, threads) {
                Ok(rows) => rows,
                Err(e) => return fail(RUNTIME_ERROR, e),
            };
            if let Err(e) = save_rows(&rows, &out) {
                return fail(RUNTIME_ERROR, e);
            }
            ExitCode::SUCCESS
        }
        Command::Trace { config, seed, out, outer_tol } => {
            let cfg = match SystemConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(CONFIG_ERROR, e),
            };
            let opts = DriverOptions { outer_tol, ..Default::default() };
            match emit_convergence_trace(seed, &cfg, &opts, &out) {
                Ok(sol) => {
                    println!("final total latency {:.6e} s after {} outer iterations", sol.objective, sol.trace.outer_iterations());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(RUNTIME_ERROR, e),
            }
        }
        Command::Validate { config } => match SystemConfig::load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(CONFIG_ERROR, e),
        },
    }
}
