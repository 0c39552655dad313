//! Command-line front end: argument parsing, config loading and dispatch.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, unreadable or
//! invalid config, empty trace), 2 on runtime errors including exhausted
//! attack budgets.

pub mod commands;
pub mod config;
#[cfg(test)]
mod tests;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clepsydra", version, about = "ClepsydraCache simulator and security analytics")]
pub struct Cli {
    /// Worker threads for subcommands that fan out (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a trace (or the configured workload) and report run statistics.
    Simulate(SimulateArgs),
    /// Run an attack scenario against one cache model.
    Attack(AttackArgs),
    /// Closed-form set sizes and profiling-time estimates.
    Analyze(AnalyzeArgs),
    /// Monte Carlo cross-check of the closed forms.
    Mc(McArgs),
    /// Write a synthetic workload trace.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides CLEPSYDRA_SEED and the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Classic,
    Randomized,
    Clepsydra,
}

impl From<Model> for clepsydra::ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Classic => clepsydra::ModelKind::Classic,
            Model::Randomized => clepsydra::ModelKind::Randomized,
            Model::Clepsydra => clepsydra::ModelKind::Clepsydra,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trace file; without it the configured workload is generated.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Override the configured cache model.
    #[arg(long)]
    pub model: Option<Model>,
    /// Run the same trace on all three models.
    #[arg(long, conflicts_with = "model")]
    pub compare: bool,
    /// Print aligned text instead of CSV.
    #[arg(long)]
    pub text: bool,
    /// Fail if an evicted line outlived the TTL schedule's bound.
    #[arg(long)]
    pub check_lifetime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackMode {
    /// Build a generalized eviction set with Prime+Prune+Probe.
    Ppp,
    /// Build a set, then run Prime+Probe against a coin-flip victim.
    Pp,
    /// Evict+Time against a victim with a secret-dependent cache set.
    EvictTime,
    /// Flooding attacker against a benign workload.
    Dos,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub mode: AttackMode,
    /// Cache model under attack (default: from the config).
    #[arg(long = "cache", value_enum)]
    pub cache: Option<Model>,
    /// Seeded repetitions (ppp), victim runs (pp) or samples per arm
    /// (evict-time).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Virtual-time budget in ns for building the eviction set.
    #[arg(long)]
    pub budget_ns: Option<u64>,
    /// Target eviction probability of the set.
    #[arg(long)]
    pub p_e: Option<f64>,
    /// Priming-set size.
    #[arg(long)]
    pub priming: Option<usize>,
    /// Attacker sees latencies only, not conflict signals.
    #[arg(long)]
    pub timing_only: bool,
    /// Flooding accesses per benign access (dos).
    #[arg(long)]
    pub flood_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Profiling,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub table: Table,
    /// Cache entries (default: config analysis setup, 131072).
    #[arg(long = "N")]
    pub n: Option<u64>,
    /// Associativity (default: config analysis setup, 16).
    #[arg(long)]
    pub ways: Option<u64>,
    /// Eviction goal for the profiling table.
    #[arg(long, default_value_t = 0.5)]
    pub p_e: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McExperiment {
    Catch,
    Evict,
    Conflicts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Clepsydra,
    Scattercache,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, value_enum)]
    pub experiment: McExperiment,
    #[arg(long, value_enum, default_value = "clepsydra")]
    pub scheme: SchemeArg,
    #[arg(long = "N", default_value_t = 1024)]
    pub n: u64,
    #[arg(long, default_value_t = 4)]
    pub ways: u64,
    /// k' (catch), |G| (evict) or k (conflicts); a per-experiment default
    /// otherwise.
    #[arg(long)]
    pub size: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[command(flatten)]
    pub common: Common,
    /// loop, random, zipf, dos-flood or mixed (default: from the config).
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub accesses: Option<usize>,
    #[arg(long)]
    pub footprint: Option<usize>,
    #[arg(long)]
    pub write_ratio: Option<f64>,
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("clepsydra: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Attack(a) => commands::attack(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Mc(a) => commands::mc(&a),
        Command::GenTrace(a) => commands::gen_trace(&a),
    })
}

/// Write to `path`, or stdout when absent.
pub(crate) fn emit(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}")))
        }
    }
}
