//! Command-line front end for `lsr-core`.
//!
//! Configuration is resolved in layers: built-in defaults, then a `--config`
//! file, then `--preset`, then individual flags (each flag can also come from
//! an `LSRSEG_*` environment variable). The resolved config is written next to
//! every run's results.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration, 3 numerical failure,
//! 4 failed diagnostics.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lsr_core::datagen::SubspaceMode;
use lsr_core::ErrorClass;

use config::{CommandKind, Preset, RunConfig, SolverChoice};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lsr_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("check {name} failed: {detail}")]
    CheckFailed {
        name: String,
        detail: String,
        witness: serde_json::Value,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Io => 1,
                ErrorClass::Config => 2,
                ErrorClass::Numeric => 3,
            },
            CliError::Config(_) => 2,
            CliError::CheckFailed { .. } => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lsrseg", version, about = "Subspace segmentation by least squares regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic union-of-subspaces dataset.
    Synth(Flags),
    /// Solve, build the affinity, cluster and score.
    Segment(Flags),
    /// Run the block-diagonality, grouping and solver-equivalence diagnostics.
    Check(Flags),
    /// Time the closed-form solvers against per-column solves.
    Bench(Flags),
    /// Write the coefficient matrix without clustering.
    Solve(Flags),
}

impl Command {
    fn parts(&self) -> (CommandKind, &Flags) {
        match self {
            Command::Synth(f) => (CommandKind::Synth, f),
            Command::Segment(f) => (CommandKind::Segment, f),
            Command::Check(f) => (CommandKind::Check, f),
            Command::Bench(f) => (CommandKind::Bench, f),
            Command::Solve(f) => (CommandKind::Solve, f),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run config, e.g. a previous run's resolved_config.toml.
    #[arg(long, env = "LSRSEG_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "LSRSEG_INPUT")]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "LSRSEG_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, env = "LSRSEG_SOLVER")]
    pub solver: Option<SolverChoice>,
    #[arg(long, env = "LSRSEG_LAMBDA", allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long, env = "LSRSEG_K")]
    pub k: Option<usize>,
    #[arg(long, env = "LSRSEG_PCA_DIM")]
    pub pca_dim: Option<usize>,
    #[arg(long, env = "LSRSEG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "LSRSEG_RESTARTS")]
    pub restarts: Option<usize>,
    #[arg(long, value_enum, env = "LSRSEG_PRESET")]
    pub preset: Option<Preset>,
    #[arg(long, env = "LSRSEG_NORMALIZE_COLUMNS")]
    pub normalize_columns: bool,
    /// Subtract the mean before PCA.
    #[arg(long, env = "LSRSEG_CENTER")]
    pub center: bool,
    /// Constrain diag(Z) = 0 for the noise-free solver.
    #[arg(long, env = "LSRSEG_ZERO_DIAG")]
    pub zero_diag: bool,

    #[arg(long, env = "LSRSEG_TOL_FEASIBILITY")]
    pub tol_feasibility: Option<f64>,
    #[arg(long, env = "LSRSEG_TOL_RANK")]
    pub tol_rank: Option<f64>,
    #[arg(long, env = "LSRSEG_TOL_ORACLE")]
    pub tol_oracle: Option<f64>,
    #[arg(long, env = "LSRSEG_TOL_BLOCK")]
    pub tol_block: Option<f64>,
    #[arg(long, env = "LSRSEG_TOL_BLOCK_ORTHOGONAL")]
    pub tol_block_orthogonal: Option<f64>,
    #[arg(long, env = "LSRSEG_TOL_GROUPING")]
    pub tol_grouping: Option<f64>,
    #[arg(long, env = "LSRSEG_TOL_DUPLICATE")]
    pub tol_duplicate: Option<f64>,

    /// Per-subspace dimension for `synth`.
    #[arg(long, env = "LSRSEG_SUBSPACE_DIM")]
    pub subspace_dim: Option<usize>,
    #[arg(long, env = "LSRSEG_AMBIENT_DIM")]
    pub ambient_dim: Option<usize>,
    /// Samples per subspace for `synth`.
    #[arg(long, env = "LSRSEG_SAMPLES")]
    pub samples: Option<usize>,
    #[arg(long, env = "LSRSEG_NOISE")]
    pub noise: Option<f64>,
    #[arg(long, value_parser = parse_mode, env = "LSRSEG_MODE")]
    pub mode: Option<SubspaceMode>,
    #[arg(long, env = "LSRSEG_CORRELATION")]
    pub correlation: Option<f64>,
    /// Subspace spec file for `synth`.
    #[arg(long, env = "LSRSEG_SPEC")]
    pub spec: Option<PathBuf>,

    /// Criteria for `check` that must satisfy the block-enforcing conditions.
    #[arg(long = "criterion", env = "LSRSEG_CRITERIA", value_delimiter = ',')]
    pub criteria: Vec<String>,
    #[arg(long, env = "LSRSEG_EBD_TRIALS")]
    pub ebd_trials: Option<usize>,
    #[arg(long, env = "LSRSEG_ORACLE_INSTANCES")]
    pub oracle_instances: Option<usize>,
    #[arg(long, env = "LSRSEG_GROUPING_INSTANCES")]
    pub grouping_instances: Option<usize>,
    #[arg(long, env = "LSRSEG_BLOCK_SPECS")]
    pub block_specs: Option<usize>,
    #[arg(long, hide = true)]
    pub tamper_lsr1: bool,

    /// Sample counts for `bench`.
    #[arg(long, env = "LSRSEG_SIZES", value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Data dimension for `bench`.
    #[arg(long, env = "LSRSEG_DIM")]
    pub dim: Option<usize>,
    #[arg(long, env = "LSRSEG_REPETITIONS")]
    pub repetitions: Option<usize>,
}

fn parse_mode(s: &str) -> Result<SubspaceMode, String> {
    match s {
        "independent" => Ok(SubspaceMode::Independent),
        "orthogonal" => Ok(SubspaceMode::Orthogonal),
        _ => Err(format!("expected independent or orthogonal, got {s:?}")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Merges config file, preset and flags into one config.
pub fn resolve(command: CommandKind, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cfg.command = command;
    if let Some(p) = flags.preset {
        cfg.apply_preset(p);
    }
    set(&mut cfg.solver, flags.solver);
    set(&mut cfg.lambda, flags.lambda);
    if flags.k.is_some() {
        cfg.k = flags.k;
    }
    if flags.pca_dim.is_some() {
        cfg.pca_dim = flags.pca_dim;
    }
    set(&mut cfg.seed, flags.seed);
    set(&mut cfg.restarts, flags.restarts);
    if flags.input.is_some() {
        cfg.input = flags.input.clone();
    }
    if flags.output.is_some() {
        cfg.output = flags.output.clone();
    }
    cfg.normalize_columns |= flags.normalize_columns;
    cfg.center |= flags.center;
    cfg.zero_diag |= flags.zero_diag;

    let tol = &mut cfg.tolerances;
    set(&mut tol.feasibility, flags.tol_feasibility);
    set(&mut tol.rank, flags.tol_rank);
    set(&mut tol.oracle, flags.tol_oracle);
    set(&mut tol.block, flags.tol_block);
    set(&mut tol.block_orthogonal, flags.tol_block_orthogonal);
    set(&mut tol.grouping, flags.tol_grouping);
    set(&mut tol.duplicate, flags.tol_duplicate);

    let synth = &mut cfg.synth;
    set(&mut synth.subspace_dim, flags.subspace_dim);
    set(&mut synth.ambient_dim, flags.ambient_dim);
    set(&mut synth.samples, flags.samples);
    set(&mut synth.noise, flags.noise);
    set(&mut synth.mode, flags.mode);
    if flags.correlation.is_some() {
        synth.correlation = flags.correlation;
    }
    if flags.spec.is_some() {
        synth.spec = flags.spec.clone();
    }

    let check = &mut cfg.check;
    if !flags.criteria.is_empty() {
        check.criteria = flags.criteria.clone();
    }
    set(&mut check.ebd_trials, flags.ebd_trials);
    set(&mut check.oracle_instances, flags.oracle_instances);
    set(&mut check.grouping_instances, flags.grouping_instances);
    set(&mut check.block_specs, flags.block_specs);
    check.tamper_lsr1 |= flags.tamper_lsr1;

    if !flags.sizes.is_empty() {
        cfg.bench.sizes = flags.sizes.clone();
    }
    set(&mut cfg.bench.dim, flags.dim);
    set(&mut cfg.bench.repetitions, flags.repetitions);

    cfg.validate()?;
    Ok(cfg)
}

/// Runs the configured command; returns a short human-readable summary.
pub fn run(cfg: &RunConfig) -> Result<String, CliError> {
    match cfg.command {
        CommandKind::Synth => {
            let path = commands::cmd_synth(cfg)?;
            Ok(format!("wrote {}", path.display()))
        }
        CommandKind::Segment => {
            let report = commands::cmd_segment(cfg)?;
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))
        }
        CommandKind::Check => {
            let bundle = commands::cmd_check(cfg)?;
            Ok(bundle
                .checks
                .iter()
                .map(|c| format!("PASS {}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("\n"))
        }
        CommandKind::Bench => Ok(commands::bench_csv(&commands::cmd_bench(cfg)?)),
        CommandKind::Solve => {
            let z = commands::cmd_solve(cfg)?;
            Ok(format!("solved {}x{} coefficients", z.z.rows(), z.z.cols()))
        }
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (kind, flags) = cli.command.parts();
    let result = resolve(kind, flags).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::CheckFailed { witness, .. } = &e {
                eprintln!("{}", serde_json::to_string_pretty(witness).unwrap_or_default());
            }
            e.exit_code()
        }
    }
}
