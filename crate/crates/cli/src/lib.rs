//! Command-line front end: seeded instance generation, class checks,
//! fundamental-operator solves and identity-suite runs with JSON or text
//! reports.
//!
//! Exit codes: 0 success, 1 other runtime error, 2 parse/IO/usage error,
//! 3 dimension error, 4 solve residual above tolerance, 5 identity failure.

pub mod args;
pub mod commands;
pub mod instance;

use args::{Cli, Command, RunConfig};
use commands::Output;
use opkit_core::gamma_fo::FoError;
use opkit_core::linalg::LinalgError;
use opkit_core::model::ModelError;
use opkit_core::tetrablock::TetraError;

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code of runtime errors outside the other categories.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit code of parse, IO and usage errors.
pub const EXIT_PARSE: i32 = 2;
/// Exit code of dimension errors.
pub const EXIT_DIMENSION: i32 = 3;
/// Exit code when a fundamental-operator solve misses its tolerance.
pub const EXIT_RESIDUAL: i32 = 4;
/// Exit code when an executed identity fails.
pub const EXIT_IDENTITY: i32 = 5;

/// An error with its exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        CliError { code: EXIT_PARSE, message }
    }

    pub fn parse(message: String) -> Self {
        CliError { code: EXIT_PARSE, message }
    }

    pub fn dimension(message: String) -> Self {
        CliError { code: EXIT_DIMENSION, message }
    }
}

fn linalg_code(e: &LinalgError) -> i32 {
    match e {
        LinalgError::DimensionMismatch { .. } => EXIT_DIMENSION,
        _ => EXIT_RUNTIME,
    }
}

fn fo_code(e: &FoError) -> i32 {
    match e {
        FoError::ResidualTooLarge { .. } => EXIT_RESIDUAL,
        FoError::Malformed(_) => EXIT_DIMENSION,
        FoError::InvalidParams(_) => EXIT_PARSE,
        FoError::Linalg(l) => linalg_code(l),
        _ => EXIT_RUNTIME,
    }
}

impl From<FoError> for CliError {
    fn from(e: FoError) -> Self {
        CliError { code: fo_code(&e), message: e.to_string() }
    }
}

impl From<TetraError> for CliError {
    fn from(e: TetraError) -> Self {
        let code = match &e {
            TetraError::ResidualTooLarge { .. } => EXIT_RESIDUAL,
            TetraError::InvalidParams(_) => EXIT_PARSE,
            TetraError::Fo(f) => fo_code(f),
            TetraError::Linalg(l) => linalg_code(l),
            TetraError::Model(ModelError::Fo(f)) => fo_code(f),
            _ => EXIT_RUNTIME,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Fo(f) => fo_code(f),
            ModelError::Linalg(l) => linalg_code(l),
            ModelError::InvalidGrid(_) => EXIT_PARSE,
            _ => EXIT_RUNTIME,
        };
        CliError { code, message: e.to_string() }
    }
}

/// Caps the global thread pool at `GAMMA_OPKIT_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("GAMMA_OPKIT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if the pool was already initialized; the cap then
            // stays whatever was configured first.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Runs a parsed command line and writes the report to `--out` when given
/// (the returned text is then empty).
pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    let (cfg, out) = match &cli.command {
        Command::Check(a) => {
            let cfg = RunConfig::from_args(a, None)?;
            let out = commands::cmd_check(&cfg)?;
            (cfg, out)
        }
        Command::Fo(a) => {
            let cfg = RunConfig::from_args(a, None)?;
            let out = commands::cmd_fo(&cfg)?;
            (cfg, out)
        }
        Command::Verify(v) => {
            let cfg = RunConfig::from_args(&v.run, Some(&v.ids))?;
            let out = commands::cmd_verify(&cfg)?;
            (cfg, out)
        }
        Command::Generate(a) => {
            let cfg = RunConfig::from_args(a, None)?;
            let out = commands::cmd_generate(&cfg)?;
            (cfg, out)
        }
    };
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &out.text)
                .map_err(|e| CliError::parse(format!("cannot write {}: {e}", path.display())))?;
            Ok(Output { code: out.code, text: String::new() })
        }
        None => Ok(out),
    }
}
