//! Iterate-update loops: SdLBFGS, SdLBFGS0 and the SGD, Adagrad and plain
//! fixed-step L-BFGS baselines.
//!
//! Every step evaluates the oracle at the current iterate, moves the iterate
//! and returns the [`TrajectoryRecord`] for that iteration. A step never
//! touches the oracle beyond calling it.

use crate::direction::{
    compute_direction, compute_gamma, two_loop, CurvatureMemory, CurvaturePair, DampingConfig,
    Direction, DirectionInput, InitMode,
};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm, sub};
use crate::objectives::{BatchSeed, Evaluation, GradientOracle};
use crate::schedule::StepSchedule;
use crate::trajectory::{Flag, TrajectoryRecord};

#[derive(Debug, Clone)]
enum Extra {
    None,
    QuasiNewton {
        memory: CurvatureMemory,
        cfg: DampingConfig,
        /// Form `y` from two gradients on the same minibatch.
        same_batch_pairs: bool,
    },
    PlainLbfgs {
        memory: CurvatureMemory,
        delta: f64,
    },
    Accumulator(Vec<f64>),
}

/// Iterate, history and method-specific memory of one run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    x: Vec<f64>,
    x_prev: Option<Vec<f64>>,
    g_prev: Option<Vec<f64>>,
    prev_batch: Option<BatchSeed>,
    k: u64,
    extra: Extra,
}

impl OptimizerState {
    fn with(x0: Vec<f64>, extra: Extra) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::InvalidInput("empty starting point".into()));
        }
        if !all_finite(&x0) {
            return Err(Error::InvalidInput("non-finite starting point".into()));
        }
        Ok(Self {
            x: x0,
            x_prev: None,
            g_prev: None,
            prev_batch: None,
            k: 1,
            extra,
        })
    }

    /// Identity initialization, normalized directions.
    pub fn sdlbfgs(x0: Vec<f64>, memory_size: usize) -> Result<Self> {
        Self::quasi_newton(x0, memory_size, DampingConfig::identity())
    }

    /// Gamma-scaled initialization with lower bound `delta`, raw directions.
    pub fn sdlbfgs0(x0: Vec<f64>, memory_size: usize, delta: f64) -> Result<Self> {
        Self::quasi_newton(x0, memory_size, DampingConfig::gamma(delta))
    }

    pub fn quasi_newton(x0: Vec<f64>, memory_size: usize, cfg: DampingConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with(
            x0,
            Extra::QuasiNewton {
                memory: CurvatureMemory::new(memory_size)?,
                cfg,
                same_batch_pairs: false,
            },
        )
    }

    /// Re-evaluates the gradient at `x_k` on the previous minibatch to form
    /// `y`, costing one extra oracle call per step. Quasi-Newton modes only.
    pub fn with_same_batch_pairs(mut self, on: bool) -> Self {
        if let Extra::QuasiNewton {
            same_batch_pairs, ..
        } = &mut self.extra
        {
            *same_batch_pairs = on;
        }
        self
    }

    pub fn sgd(x0: Vec<f64>) -> Result<Self> {
        Self::with(x0, Extra::None)
    }

    pub fn adagrad(x0: Vec<f64>) -> Result<Self> {
        let acc = vec![0.0; x0.len()];
        Self::with(x0, Extra::Accumulator(acc))
    }

    pub fn lbfgs(x0: Vec<f64>, memory_size: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta must be > 0, got {delta}"
            )));
        }
        Self::with(
            x0,
            Extra::PlainLbfgs {
                memory: CurvatureMemory::new(memory_size)?,
                delta,
            },
        )
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_prev(&self) -> Option<&[f64]> {
        self.x_prev.as_deref()
    }

    pub fn g_prev(&self) -> Option<&[f64]> {
        self.g_prev.as_deref()
    }

    /// Iteration counter, starting at 1.
    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn memory(&self) -> Option<&CurvatureMemory> {
        match &self.extra {
            Extra::QuasiNewton { memory, .. } | Extra::PlainLbfgs { memory, .. } => Some(memory),
            _ => None,
        }
    }

    pub fn damping(&self) -> Option<&DampingConfig> {
        match &self.extra {
            Extra::QuasiNewton { cfg, .. } => Some(cfg),
            _ => None,
        }
    }

    /// Adagrad's running sum of squared gradients.
    pub fn accumulator(&self) -> Option<&[f64]> {
        match &self.extra {
            Extra::Accumulator(a) => Some(a),
            _ => None,
        }
    }

    fn advance(&mut self, x_next: Option<Vec<f64>>, g: Vec<f64>, batch: BatchSeed) {
        let x_next = x_next.unwrap_or_else(|| self.x.clone());
        self.x_prev = Some(std::mem::replace(&mut self.x, x_next));
        self.g_prev = Some(g);
        self.prev_batch = Some(batch);
        self.k += 1;
    }
}

fn record(k: u64, ev: &Evaluation, alpha: f64, flag: Flag) -> TrajectoryRecord {
    TrajectoryRecord {
        iter: k,
        objective: ev.value,
        grad_norm: norm(&ev.grad),
        alpha,
        test_accuracy: None,
        flag,
    }
}

fn evaluate(
    state: &OptimizerState,
    oracle: &dyn GradientOracle,
    batch: BatchSeed,
) -> Result<Evaluation> {
    if oracle.dim() != state.dim() {
        return Err(Error::InvalidInput(format!(
            "oracle dimension {} does not match iterate dimension {}",
            oracle.dim(),
            state.dim()
        )));
    }
    oracle.eval(&state.x, batch)
}

fn is_finite_eval(ev: &Evaluation) -> bool {
    ev.value.is_finite() && all_finite(&ev.grad)
}

/// Records a non-finite evaluation without moving; the caller ends the run.
fn flag_nonfinite(state: &OptimizerState, ev: &Evaluation, alpha: f64) -> TrajectoryRecord {
    record(state.k, ev, alpha, Flag::Nonfinite)
}

fn quasi_newton_step(
    state: &mut OptimizerState,
    oracle: &dyn GradientOracle,
    sched: &StepSchedule,
    batch: BatchSeed,
    mode: InitMode,
) -> Result<TrajectoryRecord> {
    let k = state.k;
    let alpha = sched.alpha(k)?;
    let ev = evaluate(state, oracle, batch)?;

    let Extra::QuasiNewton {
        cfg,
        same_batch_pairs,
        ..
    } = &state.extra
    else {
        return Err(Error::InvalidInput(
            "state is not a quasi-Newton state".into(),
        ));
    };
    if cfg.mode != mode {
        return Err(Error::InvalidInput(format!(
            "state is in {:?} mode, step expects {mode:?}",
            cfg.mode
        )));
    }
    let (cfg, same_batch_pairs) = (*cfg, *same_batch_pairs);

    if !is_finite_eval(&ev) {
        return match mode {
            InitMode::Identity => Err(Error::numerical(
                k,
                format!("objective {} or gradient not finite", ev.value),
            )),
            InitMode::Gamma => Ok(flag_nonfinite(state, &ev, alpha)),
        };
    }

    let g_pair = match (same_batch_pairs, state.prev_batch) {
        (true, Some(prev)) => Some(oracle.eval(&state.x, prev)?.grad),
        _ => None,
    };

    let Extra::QuasiNewton { memory, .. } = &mut state.extra else {
        unreachable!("checked above")
    };
    let input = DirectionInput {
        x: &state.x,
        g: &ev.grad,
        prev: state.x_prev.as_deref().zip(state.g_prev.as_deref()),
        g_pair: g_pair.as_deref(),
    };
    let direction = match compute_direction(memory, &cfg, input) {
        Ok(d) => d,
        Err(Error::NonFinite(what)) => {
            return match mode {
                InitMode::Identity => Err(Error::numerical(k, format!("{what} not finite"))),
                InitMode::Gamma => Ok(flag_nonfinite(state, &ev, alpha)),
            }
        }
        Err(e) => return Err(e),
    };

    let (x_next, flag) = match direction {
        Direction::Step(d) => {
            let mut x = state.x.clone();
            axpy(-alpha, &d, &mut x);
            (Some(x), Flag::Ok)
        }
        Direction::Converged => (None, Flag::Converged),
    };
    let rec = record(k, &ev, alpha, flag);
    state.advance(x_next, ev.grad, batch);
    Ok(rec)
}

/// One SdLBFGS iteration: `x <- x - alpha_k * d_k` with `d_k` the unit-norm
/// damped L-BFGS direction built from `H_{k,0} = I`.
///
/// A non-finite objective or gradient is an error naming the iteration.
pub fn sdlbfgs_step(
    state: &mut OptimizerState,
    oracle: &dyn GradientOracle,
    sched: &StepSchedule,
    batch: BatchSeed,
) -> Result<TrajectoryRecord> {
    quasi_newton_step(state, oracle, sched, batch, InitMode::Identity)
}

/// One SdLBFGS0 iteration: gamma-scaled `H_{k,0}`, unnormalized direction.
///
/// Divergence is expected in this mode; non-finite values come back as a
/// record flagged [`Flag::Nonfinite`].
pub fn sdlbfgs0_step(
    state: &mut OptimizerState,
    oracle: &dyn GradientOracle,
    sched: &StepSchedule,
    batch: BatchSeed,
) -> Result<TrajectoryRecord> {
    quasi_newton_step(state, oracle, sched, batch, InitMode::Gamma)
}

pub fn sgd_step(
    state: &mut OptimizerState,
    oracle: &dyn GradientOracle,
    lr: f64,
    batch: BatchSeed,
) -> Result<TrajectoryRecord> {
    let ev = evaluate(state, oracle, batch)?;
    if !is_finite_eval(&ev) {
        return Ok(flag_nonfinite(state, &ev, lr));
    }
    let mut x = state.x.clone();
    axpy(-lr, &ev.grad, &mut x);
    let rec = record(state.k, &ev, lr, Flag::Ok);
    state.advance(Some(x), ev.grad, batch);
    Ok(rec)
}

/// `a <- a + g*g`, `x <- x - lr * g / (sqrt(a) + eps)`; coordinates with a
/// zero gradient are left alone.
pub fn adagrad_step(
    state: &mut OptimizerState,
    oracle: &dyn GradientOracle,
    lr: f64,
    eps: f64,
    batch: BatchSeed,
) -> Result<TrajectoryRecord> {
    let ev = evaluate(state, oracle, batch)?;
    if !is_finite_eval(&ev) {
        return Ok(flag_nonfinite(state, &ev, lr));
    }
    let Extra::Accumulator(acc) = &mut state.extra else {
        return Err(Error::InvalidInput("state is not an Adagrad state".into()));
    };
    let mut x = state.x.clone();
    for ((xi, ai), &gi) in x.iter_mut().zip(acc.iter_mut()).zip(&ev.grad) {
        if gi != 0.0 {
            *ai += gi * gi;
            *xi -= lr * gi / (ai.sqrt() + eps);
        }
    }
    let rec = record(state.k, &ev, lr, Flag::Ok);
    state.advance(Some(x), ev.grad, batch);
    Ok(rec)
}

/// Undamped L-BFGS with a fixed step: raw `(s, y)` pairs (skipped unless
/// `s'y > 0`), `H_{k,0} = I / gamma_k`, no normalization, no line search.
pub fn lbfgs_plain_step(
    state: &mut OptimizerState,
    oracle: &dyn GradientOracle,
    lr: f64,
    batch: BatchSeed,
) -> Result<TrajectoryRecord> {
    let ev = evaluate(state, oracle, batch)?;
    if !is_finite_eval(&ev) {
        return Ok(flag_nonfinite(state, &ev, lr));
    }
    let Extra::PlainLbfgs { memory, delta } = &mut state.extra else {
        return Err(Error::InvalidInput(
            "state is not a plain L-BFGS state".into(),
        ));
    };

    let mut h0_scale = 1.0;
    if let (Some(x_prev), Some(g_prev)) = (&state.x_prev, &state.g_prev) {
        let s = sub(&state.x, x_prev);
        let y = sub(&ev.grad, g_prev);
        if s.iter().any(|&v| v != 0.0) && all_finite(&s) {
            let gamma = compute_gamma(&s, &y, &DampingConfig::gamma(*delta))?;
            if gamma.is_finite() {
                h0_scale = 1.0 / gamma;
            }
            if dot(&s, &y) > 0.0 {
                if let Ok(pair) = CurvaturePair::new(s, y) {
                    memory.push(pair)?;
                }
            }
        }
    }

    let v = two_loop(memory, &ev.grad, h0_scale)?;
    if !all_finite(&v) {
        return Ok(flag_nonfinite(state, &ev, lr));
    }
    let mut x = state.x.clone();
    axpy(-lr, &v, &mut x);
    let rec = record(state.k, &ev, lr, Flag::Ok);
    state.advance(Some(x), ev.grad, batch);
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SdLbfgs,
    SdLbfgs0,
    Sgd,
    Adagrad,
    Lbfgs,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::SdLbfgs,
        OptimizerKind::SdLbfgs0,
        OptimizerKind::Sgd,
        OptimizerKind::Adagrad,
        OptimizerKind::Lbfgs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::SdLbfgs => "sdlbfgs",
            OptimizerKind::SdLbfgs0 => "sdlbfgs0",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Lbfgs => "lbfgs",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_quasi_newton(self) -> bool {
        matches!(self, OptimizerKind::SdLbfgs | OptimizerKind::SdLbfgs0)
    }
}

/// Method-agnostic driver: a state plus the schedule that supplies the step
/// size (or learning rate) of every iteration.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    state: OptimizerState,
    schedule: StepSchedule,
    adagrad_eps: f64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, state: OptimizerState, schedule: StepSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            kind,
            state,
            schedule,
            adagrad_eps: 1e-10,
        })
    }

    /// Allows a zero learning rate (a frozen run); all other schedule checks apply.
    pub fn new_unchecked_rate(
        kind: OptimizerKind,
        state: OptimizerState,
        schedule: StepSchedule,
    ) -> Self {
        Self {
            kind,
            state,
            schedule,
            adagrad_eps: 1e-10,
        }
    }

    pub fn with_adagrad_eps(mut self, eps: f64) -> Self {
        self.adagrad_eps = eps;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn step(
        &mut self,
        oracle: &dyn GradientOracle,
        batch: BatchSeed,
    ) -> Result<TrajectoryRecord> {
        let s = &mut self.state;
        match self.kind {
            OptimizerKind::SdLbfgs => sdlbfgs_step(s, oracle, &self.schedule, batch),
            OptimizerKind::SdLbfgs0 => sdlbfgs0_step(s, oracle, &self.schedule, batch),
            OptimizerKind::Sgd => sgd_step(s, oracle, self.schedule.alpha(s.k)?, batch),
            OptimizerKind::Adagrad => adagrad_step(
                s,
                oracle,
                self.schedule.alpha(s.k)?,
                self.adagrad_eps,
                batch,
            ),
            OptimizerKind::Lbfgs => lbfgs_plain_step(s, oracle, self.schedule.alpha(s.k)?, batch),
        }
    }
}
