use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cblre_cli::{run, RunOptions, EXIT_VALIDATION};

/// Runs one experiment described by a key=value config file.
#[derive(Debug, Parser)]
#[command(name = "cblre", version)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, env = "CBLRE_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    }
    let opts = RunOptions { config: args.config, out: args.out, seed: args.seed, verbose: args.verbose };
    ExitCode::from(run(&opts) as u8)
}
