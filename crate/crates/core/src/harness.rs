//! Experiment runner: builds a problem and optimizer from a [`RunConfig`],
//! iterates, evaluates held-out accuracy on a cadence, and streams records.

use std::path::PathBuf;

use crate::datasets::{load_mnist_dir, subset, synthetic_blobs, Dataset};
use crate::direction::DampingConfig;
use crate::error::{Error, Result};
use crate::objectives::{
    BatchSeed, Classifier, GradientOracle, LogisticRegression, Mlp, Quadratic, Rosenbrock,
};
use crate::optim::{Optimizer, OptimizerKind, OptimizerState};
use crate::schedule::StepSchedule;
use crate::trajectory::{CsvSink, Flag, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Rosenbrock2d,
    Quadratic,
    LogregSynth,
    MlpMnist,
    LogregMnist,
}

impl Problem {
    pub const ALL: [Problem; 5] = [
        Problem::Rosenbrock2d,
        Problem::Quadratic,
        Problem::LogregSynth,
        Problem::MlpMnist,
        Problem::LogregMnist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Problem::Rosenbrock2d => "rosenbrock2d",
            Problem::Quadratic => "quadratic",
            Problem::LogregSynth => "logreg-synth",
            Problem::MlpMnist => "mlp-mnist",
            Problem::LogregMnist => "logreg-mnist",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn needs_mnist(self) -> bool {
        matches!(self, Problem::MlpMnist | Problem::LogregMnist)
    }
}

/// How long to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Iterations(u64),
    /// Full passes over the training set; only meaningful for learning problems.
    Epochs(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerKind,
    pub problem: Problem,
    pub schedule: StepSchedule,
    pub memory_size: usize,
    pub batch_size: usize,
    pub delta: f64,
    pub budget: Budget,
    pub seed: u64,
    /// Iterations between test-accuracy evaluations; `None` means once per epoch.
    pub eval_every: Option<u64>,
    pub mnist_dir: Option<PathBuf>,
    pub train_size: usize,
    pub test_size: usize,
    pub hidden: usize,
    pub l2: f64,
    pub adagrad_eps: f64,
    pub same_batch_pairs: bool,
    pub out_path: Option<PathBuf>,
}

impl RunConfig {
    pub const DEFAULT_MEMORY: usize = 100;
    pub const DEFAULT_BATCH: usize = 64;
    pub const DEFAULT_ITERS: u64 = 1000;

    /// Defaults: memory 100, batch 64, `1/sqrt(k)` for the quasi-Newton
    /// modes and a constant 0.01 learning rate for the baselines.
    pub fn new(optimizer: OptimizerKind, problem: Problem) -> Self {
        let schedule = if optimizer.is_quasi_newton() {
            StepSchedule::InverseSqrt { base: 1.0 }
        } else {
            StepSchedule::Constant { base: 0.01 }
        };
        Self {
            optimizer,
            problem,
            schedule,
            memory_size: Self::DEFAULT_MEMORY,
            batch_size: Self::DEFAULT_BATCH,
            delta: Self::default_delta(optimizer),
            budget: Budget::Iterations(Self::DEFAULT_ITERS),
            seed: 0,
            eval_every: None,
            mnist_dir: None,
            train_size: 10_000,
            test_size: 2000,
            hidden: 32,
            l2: 1e-4,
            adagrad_eps: 1e-10,
            same_batch_pairs: false,
            out_path: None,
        }
    }

    /// 0.01 for SdLBFGS0, 1 for the plain L-BFGS baseline.
    pub fn default_delta(optimizer: OptimizerKind) -> f64 {
        match optimizer {
            OptimizerKind::Lbfgs => 1.0,
            _ => DampingConfig::DEFAULT_DELTA,
        }
    }

    /// Structural checks. A zero base step is accepted here (it freezes the
    /// run); the command line rejects it.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.memory_size == 0 {
            return bad("memory size must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        match self.budget {
            Budget::Iterations(0) | Budget::Epochs(0) => {
                return bad("budget must be at least 1".into())
            }
            Budget::Epochs(_)
                if !matches!(
                    self.problem,
                    Problem::LogregSynth | Problem::MlpMnist | Problem::LogregMnist
                ) =>
            {
                return bad(format!(
                    "{} has no epochs; give an iteration count",
                    self.problem.name()
                ))
            }
            _ => {}
        }
        if self.eval_every == Some(0) {
            return bad("eval interval must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be > 0, got {}", self.delta));
        }
        let base = self.schedule.base();
        if !(base >= 0.0 && base.is_finite()) {
            return bad(format!("step size must be >= 0, got {base}"));
        }
        if let StepSchedule::InversePower { beta, .. } = self.schedule {
            if !(beta > 0.5 && beta < 1.0) {
                return bad(format!("beta must lie in (0.5, 1), got {beta}"));
            }
        }
        if self.problem.needs_mnist() && self.mnist_dir.is_none() {
            return bad(format!("{} needs an MNIST directory", self.problem.name()));
        }
        Ok(())
    }
}

/// A constructed problem: oracle, starting point and optional test split.
pub enum Objective {
    Rosenbrock(Rosenbrock),
    Quadratic(Quadratic),
    Logreg {
        model: LogisticRegression,
        test: Dataset,
    },
    Mlp {
        model: Mlp,
        test: Dataset,
    },
}

impl Objective {
    /// Loads or generates data. All file I/O happens here, before any iteration.
    pub fn build(cfg: &RunConfig) -> Result<(Self, Vec<f64>)> {
        Ok(match cfg.problem {
            Problem::Rosenbrock2d => (
                Objective::Rosenbrock(Rosenbrock),
                Rosenbrock::START.to_vec(),
            ),
            Problem::Quadratic => (Objective::Quadratic(Quadratic { dim: 2 }), vec![3.0, 4.0]),
            Problem::LogregSynth => {
                let data = synthetic_blobs(200, 3, 10, 3.0, cfg.seed)?;
                let (train, test) = subset(&data, 480, 120, cfg.seed)?;
                let model = LogisticRegression::new(train, cfg.l2, cfg.batch_size)?;
                let x0 = vec![0.0; model.dim()];
                (Objective::Logreg { model, test }, x0)
            }
            Problem::MlpMnist | Problem::LogregMnist => {
                let dir = cfg
                    .mnist_dir
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing MNIST directory".into()))?;
                let data = load_mnist_dir(dir)?;
                let (train, test) = subset(&data, cfg.train_size, cfg.test_size, cfg.seed)?;
                if cfg.problem == Problem::MlpMnist {
                    let layers = [train.dim(), cfg.hidden, train.num_classes()];
                    let model = Mlp::new(train, &layers, cfg.batch_size)?;
                    let x0 = model.init_params(cfg.seed);
                    (Objective::Mlp { model, test }, x0)
                } else {
                    let model = LogisticRegression::new(train, cfg.l2, cfg.batch_size)?;
                    let x0 = vec![0.0; model.dim()];
                    (Objective::Logreg { model, test }, x0)
                }
            }
        })
    }

    pub fn oracle(&self) -> &dyn GradientOracle {
        match self {
            Objective::Rosenbrock(o) => o,
            Objective::Quadratic(o) => o,
            Objective::Logreg { model, .. } => model,
            Objective::Mlp { model, .. } => model,
        }
    }

    pub fn test_accuracy(&self, x: &[f64]) -> Option<f64> {
        match self {
            Objective::Logreg { model, test } => Some(model.accuracy(x, test)),
            Objective::Mlp { model, test } => Some(model.accuracy(x, test)),
            _ => None,
        }
    }

    pub fn batches_per_epoch(&self) -> Option<u64> {
        match self {
            Objective::Logreg { model, .. } => Some(model.batches().batches_per_epoch()),
            Objective::Mlp { model, .. } => Some(model.batches().batches_per_epoch()),
            _ => None,
        }
    }
}

fn build_optimizer(cfg: &RunConfig, x0: Vec<f64>) -> Result<Optimizer> {
    let state = match cfg.optimizer {
        OptimizerKind::SdLbfgs => OptimizerState::sdlbfgs(x0, cfg.memory_size)?,
        OptimizerKind::SdLbfgs0 => OptimizerState::sdlbfgs0(x0, cfg.memory_size, cfg.delta)?,
        OptimizerKind::Sgd => OptimizerState::sgd(x0)?,
        OptimizerKind::Adagrad => OptimizerState::adagrad(x0)?,
        OptimizerKind::Lbfgs => OptimizerState::lbfgs(x0, cfg.memory_size, cfg.delta)?,
    }
    .with_same_batch_pairs(cfg.same_batch_pairs);
    Ok(
        Optimizer::new_unchecked_rate(cfg.optimizer, state, cfg.schedule)
            .with_adagrad_eps(cfg.adagrad_eps),
    )
}

/// Runs `cfg`, handing each record to `sink` as it is produced.
///
/// The run stops early on a converged or non-finite record. A numerical
/// failure inside a step becomes a final record flagged
/// [`Flag::Nonfinite`] instead of an error. Returns the final record.
pub fn run_experiment_with<F>(cfg: &RunConfig, mut sink: F) -> Result<TrajectoryRecord>
where
    F: FnMut(&TrajectoryRecord) -> Result<()>,
{
    cfg.validate()?;
    let (objective, x0) = Objective::build(cfg)?;
    let mut opt = build_optimizer(cfg, x0)?;

    let per_epoch = objective.batches_per_epoch();
    let iters = match cfg.budget {
        Budget::Iterations(n) => n,
        Budget::Epochs(e) => e * per_epoch.unwrap_or(1),
    };
    let eval_every = cfg.eval_every.or(per_epoch);

    let mut last = None;
    for k in 1..=iters {
        let batch = BatchSeed::new(cfg.seed, k - 1);
        let mut rec = match opt.step(objective.oracle(), batch) {
            Ok(r) => r,
            Err(Error::NumericalFailure { iter, .. }) => TrajectoryRecord {
                iter,
                objective: f64::NAN,
                grad_norm: f64::NAN,
                alpha: cfg.schedule.alpha(iter).unwrap_or(f64::NAN),
                test_accuracy: None,
                flag: Flag::Nonfinite,
            },
            Err(e) => return Err(e),
        };
        let due = eval_every.is_some_and(|n| k % n == 0) || k == iters;
        if rec.flag == Flag::Ok && due {
            rec.test_accuracy = objective.test_accuracy(opt.state().x());
        }
        sink(&rec)?;
        last = Some(rec);
        if rec.flag.is_terminal() {
            break;
        }
    }
    last.ok_or_else(|| Error::InvalidConfig("empty budget".into()))
}

/// Runs `cfg` and collects every record.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    run_experiment_with(cfg, |r| {
        out.push(*r);
        Ok(())
    })?;
    Ok(out)
}

/// Runs `cfg`, streaming records to `cfg.out_path` when set.
pub fn run_to_csv(cfg: &RunConfig) -> Result<TrajectoryRecord> {
    let Some(path) = &cfg.out_path else {
        return run_experiment_with(cfg, |_| Ok(()));
    };
    // open the data before creating the output file
    cfg.validate()?;
    if let Some(dir) = cfg.mnist_dir.as_ref().filter(|_| cfg.problem.needs_mnist()) {
        for f in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"] {
            let p = dir.join(f);
            std::fs::metadata(&p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
        }
    }
    let mut out = CsvSink::create(path)?;
    let last = run_experiment_with(cfg, |r| out.push(r))?;
    out.finish()?;
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::new(OptimizerKind::SdLbfgs, Problem::Rosenbrock2d);
        assert_eq!(c.memory_size, 100);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.schedule, StepSchedule::InverseSqrt { base: 1.0 });
        assert_eq!(RunConfig::default_delta(OptimizerKind::SdLbfgs0), 0.01);
        assert_eq!(RunConfig::default_delta(OptimizerKind::Lbfgs), 1.0);
    }

    #[test]
    fn validation_errors() {
        let mut c = RunConfig::new(OptimizerKind::SdLbfgs, Problem::Rosenbrock2d);
        c.memory_size = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::new(OptimizerKind::SdLbfgs, Problem::Rosenbrock2d);
        c.budget = Budget::Epochs(2);
        assert!(c.validate().is_err());
        let c = RunConfig::new(OptimizerKind::SdLbfgs, Problem::MlpMnist);
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_mnist_files_fail_before_iterating() {
        let mut c = RunConfig::new(OptimizerKind::SdLbfgs, Problem::LogregMnist);
        c.mnist_dir = Some("/nonexistent".into());
        let mut calls = 0;
        let r = run_experiment_with(&c, |_| {
            calls += 1;
            Ok(())
        });
        assert!(matches!(r, Err(Error::Io { .. })));
        assert_eq!(calls, 0);
    }

    #[test]
    fn zero_rate_sgd_is_constant() {
        let mut c = RunConfig::new(OptimizerKind::Sgd, Problem::Rosenbrock2d);
        c.schedule = StepSchedule::Constant { base: 0.0 };
        c.budget = Budget::Iterations(20);
        let recs = run_experiment(&c).unwrap();
        assert_eq!(recs.len(), 20);
        assert!(recs.iter().all(|r| r.objective == recs[0].objective));
    }

    #[test]
    fn quadratic_stops_on_convergence_signal() {
        // SdLBFGS0 at k = 1 takes the full gradient step straight to the origin
        let mut c = RunConfig::new(OptimizerKind::SdLbfgs0, Problem::Quadratic);
        c.budget = Budget::Iterations(10);
        let recs = run_experiment(&c).unwrap();
        assert_eq!(recs[0].objective, 12.5);
        assert_eq!(recs[1].objective, 0.0);
    }

    #[test]
    fn synthetic_logreg_reports_accuracy_each_epoch() {
        let mut c = RunConfig::new(OptimizerKind::SdLbfgs, Problem::LogregSynth);
        c.budget = Budget::Epochs(2);
        let recs = run_experiment(&c).unwrap();
        // 480 training points in batches of 64
        assert_eq!(recs.len(), 14);
        let evaluated: Vec<u64> = recs
            .iter()
            .filter(|r| r.test_accuracy.is_some())
            .map(|r| r.iter)
            .collect();
        assert_eq!(evaluated, vec![7, 14]);
    }
}
