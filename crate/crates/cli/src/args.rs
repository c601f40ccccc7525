//! Command-line grammar and its translation into a validated [`RunConfig`].

use crate::CliError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use opkit_core::gamma_fo::GenParams;
use opkit_core::linalg::{c64, Tolerances};
use std::path::PathBuf;

/// Fundamental operators of Γₙ- and tetrablock contractions from the
/// command line.
#[derive(Debug, Parser)]
#[command(name = "opkit", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify an instance (unitary / isometry / unrefuted / refuted).
    Check(RunArgs),
    /// Solve the fundamental operators of an instance and of its adjoint.
    Fo(RunArgs),
    /// Run identity-catalog entries and report residuals.
    Verify(VerifyArgs),
    /// Emit a seeded generator instance as JSON.
    Generate(RunArgs),
}

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Instance JSON file (Γₙ tuple, tetrablock triple or model instance).
    #[arg(long, conflicts_with = "generator")]
    pub instance: Option<PathBuf>,
    /// Generator identifier; tetrablock generators carry a `tetra/` prefix.
    #[arg(long, requires = "seed")]
    pub generator: Option<String>,
    /// Generator parameters as K=V (n, dim, N, points, point).
    #[arg(long, num_args = 1.., value_name = "K=V")]
    pub params: Vec<String>,
    /// Generator seed (mandatory with --generator).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Residual tolerance for identities and solves.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Truncation order N of function-space instances.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// FFT grid for coefficient computations (power of two).
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
    /// Report encoding.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report to FILE instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Flags of `verify`.
#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated identity ids, or `all`.
    #[arg(long, default_value = "all")]
    pub ids: String,
}

/// Where the instance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Generator { id: String, params: GenParams, seed: u64 },
}

/// Which identities to run.
#[derive(Debug, Clone, PartialEq)]
pub enum IdSelection {
    All,
    Ids(Vec<String>),
}

impl IdSelection {
    pub fn includes(&self, id: &str) -> bool {
        match self {
            IdSelection::All => true,
            IdSelection::Ids(ids) => ids.iter().any(|i| i == id),
        }
    }
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Source,
    pub ids: IdSelection,
    pub tol: Tolerances,
    pub truncation: Option<usize>,
    pub grid: usize,
    pub format: Format,
    pub out: Option<PathBuf>,
}

fn parse_complex(s: &str) -> Result<opkit_core::linalg::Complex64, CliError> {
    let bad = || CliError::usage(format!("cannot parse complex number {s:?} (use re or re:im)"));
    let mut parts = s.split(':');
    let re: f64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let im: f64 = match parts.next() {
        Some(p) => p.trim().parse().map_err(|_| bad())?,
        None => 0.0,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(c64(re, im))
}

/// Parses `K=V` generator parameters.
pub fn parse_params(items: &[String]) -> Result<GenParams, CliError> {
    let mut p = GenParams::default();
    for item in items {
        let (k, v) = item.split_once('=').ok_or_else(|| CliError::usage(format!("parameter {item:?} is not K=V")))?;
        let int = || v.parse::<usize>().map_err(|_| CliError::usage(format!("parameter {k} needs an integer, got {v:?}")));
        match k {
            "n" => p.n = int()?,
            "dim" | "d" => p.dim = int()?,
            "N" | "truncation" => p.truncation = int()?,
            "points" | "m" => p.points = int()?,
            "point" => p.point = Some(v.split(',').map(parse_complex).collect::<Result<_, _>>()?),
            other => return Err(CliError::usage(format!("unknown parameter {other}"))),
        }
    }
    Ok(p)
}

impl RunConfig {
    /// Validates the flag combination.
    pub fn from_args(args: &RunArgs, ids: Option<&str>) -> Result<Self, CliError> {
        let source = match (&args.instance, &args.generator) {
            (Some(path), None) => {
                if !args.params.is_empty() {
                    return Err(CliError::usage("--params only applies to --generator".into()));
                }
                Source::File(path.clone())
            }
            (None, Some(id)) => {
                let seed = args.seed.ok_or_else(|| CliError::usage("--seed is mandatory with --generator".into()))?;
                let mut params = parse_params(&args.params)?;
                if let Some(n) = args.truncation {
                    params.truncation = n;
                }
                Source::Generator { id: id.clone(), params, seed }
            }
            _ => return Err(CliError::usage("exactly one of --instance or --generator is required".into())),
        };
        if !(args.tol.is_finite() && args.tol > 0.0) {
            return Err(CliError::usage("--tol must be positive".into()));
        }
        if !args.grid.is_power_of_two() || args.grid < 64 {
            return Err(CliError::usage("--grid must be a power of two of at least 64".into()));
        }
        let ids = match ids.map(str::trim) {
            None | Some("all") => IdSelection::All,
            Some(list) => IdSelection::Ids(list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
        };
        let tol = Tolerances { residual_tol: args.tol, ..Tolerances::default() };
        Ok(RunConfig { source, ids, tol, truncation: args.truncation, grid: args.grid, format: args.format, out: args.out.clone() })
    }
}
