//! Argument parsing and process plumbing for `sdlbfgs-bench`.
//!
//! `parse_config` turns an argv into a validated [`RunConfig`]; [`run`]
//! executes a full invocation and returns its exit status.

use std::ffi::OsString;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdlbfgs::harness::{run_experiment_with, run_to_csv};
use sdlbfgs::trajectory::{best_run, compare_runs, format_summary_table, CSV_HEADER};
use sdlbfgs::{Budget, Error, Flag, OptimizerKind, Problem, RunConfig, StepSchedule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_BETA: f64 = 0.75;

#[derive(Debug)]
pub struct UsageError {
    pub message: String,
    /// `--help` and `--version` are reported through this path but exit 0.
    pub is_info: bool,
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for UsageError {}

impl UsageError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            is_info: false,
        }
    }
}

impl From<clap::Error> for UsageError {
    fn from(e: clap::Error) -> Self {
        use clap::error::ErrorKind;
        let is_info = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
        Self {
            message: e.render().to_string(),
            is_info,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sdlbfgs-bench",
    version,
    about = "Run stochastic damped L-BFGS and baseline optimizers on benchmark problems",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarize trajectory CSVs and name the best run.
    Compare {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sdlbfgs,
    Sdlbfgs0,
    Sgd,
    Adagrad,
    Lbfgs,
}

impl From<OptimizerArg> for OptimizerKind {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Sdlbfgs => OptimizerKind::SdLbfgs,
            OptimizerArg::Sdlbfgs0 => OptimizerKind::SdLbfgs0,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adagrad => OptimizerKind::Adagrad,
            OptimizerArg::Lbfgs => OptimizerKind::Lbfgs,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemArg {
    Rosenbrock2d,
    Quadratic,
    LogregSynth,
    MlpMnist,
    LogregMnist,
}

impl From<ProblemArg> for Problem {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Rosenbrock2d => Problem::Rosenbrock2d,
            ProblemArg::Quadratic => Problem::Quadratic,
            ProblemArg::LogregSynth => Problem::LogregSynth,
            ProblemArg::MlpMnist => Problem::MlpMnist,
            ProblemArg::LogregMnist => Problem::LogregMnist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum ScheduleArg {
    InvSqrt,
    Constant,
    InvPower,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "sdlbfgs")]
    optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value = "rosenbrock2d")]
    problem: ProblemArg,
    /// Step size base; defaults to 1 for sdlbfgs/sdlbfgs0 and 0.01 otherwise.
    #[arg(long)]
    lr: Option<f64>,
    /// Defaults to inv-sqrt for sdlbfgs/sdlbfgs0 and constant otherwise.
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    /// Exponent of the inv-power schedule, in (0.5, 1).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = RunConfig::DEFAULT_MEMORY)]
    memory_size: usize,
    #[arg(long, default_value_t = RunConfig::DEFAULT_BATCH)]
    batch_size: usize,
    /// Lower bound on gamma; defaults to 0.01 (1 for lbfgs).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, conflicts_with = "epochs")]
    iters: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iterations between test-accuracy evaluations; defaults to once per epoch.
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Trajectory CSV; written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Hidden width of the MLP.
    #[arg(long)]
    hidden: Option<usize>,
    /// Form curvature pairs from two gradients on the same minibatch.
    #[arg(long)]
    same_batch_pairs: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, UsageError> {
        let optimizer = OptimizerKind::from(self.optimizer);
        let mut cfg = RunConfig::new(optimizer, self.problem.into());

        let base = self.lr.unwrap_or(cfg.schedule.base());
        if !(base.is_finite() && base > 0.0) {
            return Err(UsageError::new(format!("--lr: must be > 0, got {base}")));
        }
        let kind = self.schedule.unwrap_or(if optimizer.is_quasi_newton() {
            ScheduleArg::InvSqrt
        } else {
            ScheduleArg::Constant
        });
        if self.beta.is_some() && kind != ScheduleArg::InvPower {
            return Err(UsageError::new(
                "--beta: only valid with --schedule inv-power",
            ));
        }
        cfg.schedule = match kind {
            ScheduleArg::InvSqrt => StepSchedule::InverseSqrt { base },
            ScheduleArg::Constant => StepSchedule::Constant { base },
            ScheduleArg::InvPower => {
                let beta = self.beta.unwrap_or(DEFAULT_BETA);
                if !(beta > 0.5 && beta < 1.0) {
                    return Err(UsageError::new(format!(
                        "--beta: must lie in (0.5, 1), got {beta}"
                    )));
                }
                StepSchedule::InversePower { base, beta }
            }
        };

        if self.memory_size == 0 {
            return Err(UsageError::new("--memory-size: must be at least 1"));
        }
        cfg.memory_size = self.memory_size;
        if self.batch_size == 0 {
            return Err(UsageError::new("--batch-size: must be at least 1"));
        }
        cfg.batch_size = self.batch_size;
        if let Some(d) = self.delta {
            if !(d.is_finite() && d > 0.0) {
                return Err(UsageError::new(format!("--delta: must be > 0, got {d}")));
            }
            cfg.delta = d;
        }
        cfg.budget = match (self.iters, self.epochs) {
            (Some(0), _) => return Err(UsageError::new("--iters: must be at least 1")),
            (_, Some(0)) => return Err(UsageError::new("--epochs: must be at least 1")),
            (Some(n), _) => Budget::Iterations(n),
            (None, Some(e)) => {
                if !matches!(
                    cfg.problem,
                    Problem::LogregSynth | Problem::MlpMnist | Problem::LogregMnist
                ) {
                    return Err(UsageError::new(format!(
                        "--epochs: {} has no dataset; use --iters",
                        cfg.problem.name()
                    )));
                }
                Budget::Epochs(e)
            }
            (None, None) => cfg.budget,
        };
        cfg.seed = self.seed;
        if self.eval_every == Some(0) {
            return Err(UsageError::new("--eval-every: must be at least 1"));
        }
        cfg.eval_every = self.eval_every;
        if cfg.problem.needs_mnist() && self.mnist_dir.is_none() {
            return Err(UsageError::new(format!(
                "--mnist-dir: required for {}",
                cfg.problem.name()
            )));
        }
        cfg.mnist_dir = self.mnist_dir;
        cfg.out_path = self.out;
        for (flag, val, slot) in [
            ("--train-size", self.train_size, &mut cfg.train_size),
            ("--test-size", self.test_size, &mut cfg.test_size),
            ("--hidden", self.hidden, &mut cfg.hidden),
        ] {
            match val {
                Some(0) => return Err(UsageError::new(format!("{flag}: must be at least 1"))),
                Some(v) => *slot = v,
                None => {}
            }
        }
        cfg.same_batch_pairs = self.same_batch_pairs;

        cfg.validate().map_err(|e| UsageError::new(e.to_string()))?;
        Ok(cfg)
    }
}

/// Parses a run configuration. `argv[0]` is the program name.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    if cli.command.is_some() {
        return Err(UsageError::new("expected run flags, got a subcommand"));
    }
    cli.run.into_config()
}

/// Maps a library error to a process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. }
        | Error::Csv { .. }
        | Error::Format { .. }
        | Error::Length { .. }
        | Error::Consistency(_) => EXIT_IO,
        Error::NumericalFailure { .. } | Error::NonFinite(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn run_config(cfg: &RunConfig) -> Result<Flag, Error> {
    if cfg.out_path.is_some() {
        return run_to_csv(cfg).map(|r| r.flag);
    }
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let wr = |out: &mut BufWriter<_>, s: &str| {
        writeln!(out, "{s}").map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })
    };
    let mut header_done = false;
    let last = run_experiment_with(cfg, |r| {
        if !header_done {
            wr(&mut out, CSV_HEADER)?;
            header_done = true;
        }
        wr(&mut out, &r.to_csv_line())
    })?;
    out.flush().map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })?;
    Ok(last.flag)
}

fn compare(paths: &[PathBuf]) -> i32 {
    match compare_runs(paths) {
        Ok(runs) => {
            print!("{}", format_summary_table(&runs));
            if let Some(best) = best_run(&runs) {
                println!("best: {}", best.name);
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one invocation and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let e = UsageError::from(e);
            if e.is_info {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    if let Some(Command::Compare { paths }) = &cli.command {
        return compare(paths);
    }
    let cfg = match cli.run.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match run_config(&cfg) {
        Ok(Flag::Nonfinite) => {
            eprintln!("run stopped: non-finite values");
            EXIT_NUMERICAL
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
