use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nlsgap", version, about = "Gap property checks for the linearized 3D NLS ground state")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the ground state and write it with its convergence history.
    Soliton(SolitonCmd),
    /// Top eigenvalues of K- and K+ and the gap verdict at one exponent.
    Eigs(EigsCmd),
    /// Gap data over a range of exponents.
    Scan(ScanCmd),
    /// Locate the exponent where lambda5(K+) crosses one.
    Betastar(BetaStarCmd),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct GridArgs {
    /// Box side length.
    #[arg(long = "L", default_value_t = 15.0)]
    pub side: f64,
    /// Points per axis (even).
    #[arg(long = "N", default_value_t = 60)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct SolitonArgs {
    /// Relative Euler-Lagrange residual at which the iteration stops.
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    /// Damping of the translation modes.
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub delta: f64,
    /// Disable Aitken extrapolation.
    #[arg(long)]
    pub no_aitken: bool,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct EigenArgs {
    /// Eigenvalues of K+ to compute (at least 5).
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Seed of the random start block.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative residual required of each eigenpair.
    #[arg(long, default_value_t = 1e-12)]
    pub eig_tol: f64,
    /// Also solve K+ directly instead of only rescaling K-.
    #[arg(long)]
    pub cross_check: bool,
}

#[derive(Debug, Args)]
pub struct SolitonCmd {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub beta: f64,
    #[command(flatten)]
    pub soliton: SolitonArgs,
    /// Initial iterate (binary field dump).
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Binary dump of the converged field.
    #[arg(long, default_value = "soliton.nlsf")]
    pub out: PathBuf,
    /// Convergence history CSV (default: next to --out with a .csv extension).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EigsCmd {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub beta: f64,
    #[command(flatten)]
    pub soliton: SolitonArgs,
    #[command(flatten)]
    pub eigen: EigenArgs,
    /// Start the soliton iteration from this field dump.
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Eigenvalue CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 1 unless the gap property holds.
    #[arg(long)]
    pub assert_gap: bool,
}

#[derive(Debug, Args)]
pub struct ScanCmd {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta_max: f64,
    /// Number of exponents, endpoints included.
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[command(flatten)]
    pub soliton: SolitonArgs,
    #[command(flatten)]
    pub eigen: EigenArgs,
    /// Independent cold starts in parallel instead of warm-started rows.
    #[arg(long)]
    pub parallel: bool,
    /// Scan CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BetaStarCmd {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Search interval.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.89, 0.93])]
    pub bracket: Vec<f64>,
    /// Final bracket width.
    #[arg(long, default_value_t = 1e-4)]
    pub beta_tol: f64,
    #[command(flatten)]
    pub soliton: SolitonArgs,
    #[command(flatten)]
    pub eigen: EigenArgs,
    /// Only interpolate a four-row (beta, lambda5) table read from --input.
    #[arg(long, requires = "input")]
    pub table_only: bool,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
