//! `sidco`: design incoherent frames and run the sparse-recovery benchmarks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sidco::Error;

/// Exit status for bad arguments or unusable input data.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for I/O and file format problems.
pub const EXIT_IO: u8 = 3;
/// Exit status for numerical failures.
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "sidco", version, about = "Incoherent frame design by sequential convex optimization")]
struct Cli {
    /// TOML file whose keys mirror the long flags of the subcommand.
    /// Flags given on the command line take precedence. Read before parsing.
    #[arg(long, global = true, value_name = "FILE")]
    #[allow(dead_code)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design frames for one (m, N) and print the coherence table row.
    Design(DesignArgs),
    /// Report metrics and the correlation profile of a frame file.
    Analyze(AnalyzeArgs),
    /// Compressed sensing benchmark: designed versus random sensing matrices.
    CsBench(CsBenchArgs),
    /// Rotate a frame toward data by orthogonal Procrustes steps.
    Adapt(AdaptArgs),
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Space dimension.
    #[arg(long)]
    pub m: usize,
    /// Number of frame vectors.
    #[arg(long = "N")]
    pub n: usize,
    /// Maximum number of sweeps.
    #[arg(long = "K", default_value_t = 200)]
    pub k: usize,
    /// Seeds: a single value, an inclusive range `a..b`, or a comma list.
    #[arg(long, default_value = "1", value_parser = config::parse_seeds)]
    pub seeds: config::Seeds,
    /// Restrict frame entries to be nonnegative.
    #[arg(long)]
    pub nonneg: bool,
    /// Disable the polar escape step.
    #[arg(long)]
    pub no_escape: bool,
    /// Escape when the mean coherence decrease over three sweeps is below this.
    #[arg(long, default_value_t = 1e-5)]
    pub eps_stop: f64,
    /// Duality-gap tolerance of the subproblem solver.
    #[arg(long, default_value_t = 1e-8)]
    pub solver_tol: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Frame file to analyze.
    pub frame: PathBuf,
    /// Where to write the sorted correlations CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CsBenchArgs {
    /// Signal dimension.
    #[arg(long = "N", default_value_t = 80)]
    pub n: usize,
    /// Dictionary atoms.
    #[arg(long = "M", default_value_t = 120)]
    pub atoms: usize,
    /// Sparsity.
    #[arg(long, default_value_t = 4)]
    pub s: usize,
    /// Measurement counts to test.
    #[arg(long, value_delimiter = ',', default_value = "15,20,25,30,35")]
    pub m: Vec<usize>,
    /// Trials per (m, source).
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Seed shared by all sources, so every source sees the same signals.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Sensing sources: `sidco` (designed fresh), `random`.
    #[arg(long, value_delimiter = ',', default_value = "sidco,random")]
    pub sources: Vec<String>,
    /// Extra sensing frames from files, used for their own m.
    #[arg(long = "frame")]
    pub frames: Vec<PathBuf>,
    /// Sweeps used when designing fresh frames.
    #[arg(long = "K", default_value_t = 200)]
    pub k: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Initial frame file.
    #[arg(long)]
    pub frame: PathBuf,
    /// Directory of PGM/PNG images to cut into 8x8 patches (needs m = 64).
    #[arg(long, conflicts_with = "synthetic")]
    pub images: Option<PathBuf>,
    /// Use planted-rotation synthetic data instead of images.
    #[arg(long)]
    pub synthetic: bool,
    /// Sparsity of the codes.
    #[arg(long, default_value_t = 4)]
    pub s: usize,
    /// Procrustes iterations.
    #[arg(long = "K", default_value_t = 50)]
    pub k: usize,
    /// Synthetic sample count.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    /// Synthetic noise level.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) => EXIT_USAGE,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::NumericsFailure(_)
        | Error::RankDeficient { .. }
        | Error::SolverStall { .. }
        | Error::DegenerateVector(_) => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    let argv = match config::merged_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Design(a) => commands::design(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::CsBench(a) => commands::cs_bench(&a),
        Command::Adapt(a) => commands::adapt(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
