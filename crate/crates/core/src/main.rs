use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser};
use hetnet::cli::{self, RunOptions};
use hetnet::Error;

/// Runs a heteroclinic network experiment described by a TOML configuration.
#[derive(Debug, Parser)]
#[command(name = "hetnet", version)]
struct Args {
    /// Experiment configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Replaces the configuration's master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Threads for sweeps and scans.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
    /// Write one PPM image per snapshot frame.
    #[arg(long, value_name = "BOOL", action = ArgAction::Set, default_value_t = false)]
    export_frames: bool,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(args: &Args) -> Result<i32, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = cli::ExperimentConfig::parse(&text, args.seed)?;
    let out = args
        .out
        .clone()
        .or(cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let opts = RunOptions {
        out,
        workers: args.workers.max(1),
        export_frames: args.export_frames,
    };
    let report = cli::run(&text, args.seed, &opts)?;
    if let Some(e) = &report.fault {
        eprintln!("error: {e}");
    }
    Ok(report.exit_code())
}
