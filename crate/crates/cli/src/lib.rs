//! Experiment driver for the `cblre` command.

pub mod build;
pub mod config;
pub mod experiments;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use config::Config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration; nothing was computed.
    Validation(String),
    /// A computation failed after the configuration was accepted.
    Numerical(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Attaches the config section `ctx` to a library error.
pub fn within<T>(ctx: &str, r: cblre::Result<T>) -> Result<T, CliError> {
    use cblre::Error as E;
    r.map_err(|e| match e {
        E::InvalidParameter { name, reason } => CliError::Validation(format!("{ctx}.{name}: {reason}")),
        E::StepUnderflow { .. } | E::ToleranceNotMet { .. } | E::InvariantViolation(_) | E::NonFinite(_) => {
            CliError::Numerical(format!("{ctx}: {e}"))
        }
        _ => CliError::Validation(format!("{ctx}: {e}")),
    })
}

/// Files and summary produced by one experiment, written only after the
/// computation finished.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Vec<(String, String)>,
}

impl Output {
    pub fn file(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn put(&mut self, key: &str, value: impl fmt::Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    /// Appends `key=value` lines, with `prefix` before each key.
    pub fn put_lines(&mut self, prefix: &str, lines: &str) {
        for line in lines.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.put(&format!("{prefix}{k}"), v);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub verbose: bool,
}

/// Runs one experiment and returns the process exit code.
pub fn run(opts: &RunOptions) -> i32 {
    match run_inner(opts) {
        Ok(()) => EXIT_OK,
        Err((e, seed, experiment)) => {
            eprintln!("error: {e}");
            if let CliError::Numerical(_) | CliError::Io(_) = e {
                let text = format!("experiment={experiment}\nseed={seed}\nerror={e}\n");
                if fs::create_dir_all(&opts.out).is_ok() {
                    let _ = fs::write(opts.out.join("diagnostics.txt"), text);
                }
            }
            e.exit_code()
        }
    }
}

type Failure = (CliError, u64, String);

fn run_inner(opts: &RunOptions) -> Result<(), Failure> {
    let fail = |e: CliError| (e, opts.seed.unwrap_or(0), String::new());
    let text = fs::read_to_string(&opts.config)
        .map_err(|e| fail(CliError::Validation(format!("cannot read {}: {e}", opts.config.display()))))?;
    let mut cfg = Config::parse(&text).map_err(fail)?;
    if let Some(seed) = opts.seed {
        cfg.set("seed", seed.to_string());
    }
    let seed: u64 = cfg.or("seed", 1).map_err(fail)?;
    let experiment: String = cfg.req("experiment").map_err(fail)?;
    let fail = |e: CliError| (e, seed, experiment.clone());
    if opts.verbose {
        eprintln!("running {experiment} with seed {seed}");
    }
    let out = experiments::run(&experiment, &cfg, seed).map_err(fail)?;
    write_output(&opts.out, &cfg, seed, &experiment, &out).map_err(fail)?;
    if opts.verbose {
        for (k, v) in &out.summary {
            eprintln!("{k}={v}");
        }
    }
    Ok(())
}

fn write_output(dir: &Path, cfg: &Config, seed: u64, experiment: &str, out: &Output) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        fs::write(dir.join(name), bytes)?;
    }
    let summary: String = out.summary.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(dir.join("summary.txt"), summary)?;
    let hash = Sha256::digest(cfg.canonical().as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let manifest =
        format!("experiment={experiment}\nseed={seed}\nconfig_sha256={hex}\nversion={}\n", env!("CARGO_PKG_VERSION"));
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}
