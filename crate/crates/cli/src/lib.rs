//! Command-line front end: `generate`, `reduce`, `compare` and `eval`.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a reduction
//! stops early because the sample set hit its growth cap.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(phred_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<phred_core::Error> for CliError {
    fn from(e: phred_core::Error) -> Self {
        CliError::Run(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// A reduction hit the sample cap; partial results were written.
    Aborted,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Done => 0,
            Outcome::Aborted => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "phred", version, about = "Structure-preserving reduction of port-Hamiltonian systems")]
pub struct Cli {
    /// Settings file with `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "PHRED_THREADS")]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the mass-spring-damper benchmark as a system directory.
    Generate(GenerateArgs),
    /// Build an initial model and run the level bisection on it.
    Reduce(ReduceArgs),
    /// Compare adaptive and fixed sampling over a range of orders.
    Compare(CompareArgs),
    /// Dump the frequency response of a stored system.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of masses (state dimension is twice this) [default: 50]
    #[arg(long)]
    pub masses: Option<usize>,
    /// Number of actuated masses, i.e. inputs and outputs [default: 2]
    #[arg(long)]
    pub inputs: Option<usize>,
    /// [default: 4]
    #[arg(long)]
    pub mass: Option<f64>,
    /// [default: 4]
    #[arg(long)]
    pub stiffness: Option<f64>,
    /// [default: 1]
    #[arg(long)]
    pub damping: Option<f64>,
    /// Output system directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Options shared by `reduce` and `compare`.
#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Upper end of the initial level bracket [default: 0.5]
    #[arg(long)]
    pub gamma_max: Option<f64>,
    /// Relative bisection tolerance [default: 0.1]
    #[arg(long)]
    pub tau_b: Option<f64>,
    /// Cap on the number of levels [default: 30]
    #[arg(long)]
    pub max_bisect: Option<usize>,
    /// Lower end of the frequency range [default: 1e-8]
    #[arg(long)]
    pub lo: Option<f64>,
    /// Upper end of the frequency range [default: 1e5]
    #[arg(long)]
    pub hi: Option<f64>,
    /// Grid size for peak searches in the initializer [default: 2000]
    #[arg(long)]
    pub n_grid: Option<usize>,
    /// Cap on the adaptive sample set [default: 100000]
    #[arg(long)]
    pub sample_cap: Option<usize>,
    /// Relative margin below the level targeted by the optimizer [default: 1e-3]
    #[arg(long)]
    pub level_margin: Option<f64>,
    /// Optimizer iteration cap per level [default: 2000]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Points on the log grid used for response and error dumps [default: 1000]
    #[arg(long)]
    pub response_points: Option<usize>,
    /// Recorded with the outputs; the pipeline itself is deterministic [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Full-order system directory.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Reduced order (even).
    #[arg(long)]
    pub r: Option<usize>,
    /// Use this many fixed log-spaced samples instead of adaptive sampling.
    #[arg(long)]
    pub fixed_samples: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tune: TuneArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Full-order system directory.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Orders as `start:end[:step]`, a comma list, or one value [default: 4:20:2]
    #[arg(long)]
    pub r: Option<String>,
    /// Size of the fixed grid [default: 800]
    #[arg(long)]
    pub fixed_samples: Option<usize>,
    /// Size of the verification grid [default: 100000]
    #[arg(long)]
    pub verify_points: Option<usize>,
    /// Timed repeats per run; the median is reported [default: 3]
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tune: TuneArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// System directory.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// [default: 1e-8]
    #[arg(long)]
    pub lo: Option<f64>,
    /// [default: 1e5]
    #[arg(long)]
    pub hi: Option<f64>,
    /// Number of log-spaced frequencies [default: 1000]
    #[arg(long)]
    pub points: Option<usize>,
    /// Output CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let settings = match &cli.config {
        Some(path) => config::Settings::load(path)?,
        None => config::Settings::default(),
    };
    let threads = settings.get(cli.threads, "threads", 0usize)?;
    if threads > 0 {
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Generate(a) => commands::generate(&a, &settings),
        Command::Reduce(a) => commands::reduce(&a, &settings),
        Command::Compare(a) => commands::compare(&a, &settings),
        Command::Eval(a) => commands::eval(&a, &settings),
    }
}
