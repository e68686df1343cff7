//! Stochastic damped L-BFGS.
//!
//! The [`direction`] module holds the damped two-loop recursion with two
//! initializations: `H_{k,0} = I` with unit-norm directions (SdLBFGS) and the
//! gamma-scaled `H_{k,0} = I / gamma_k` with raw directions (SdLBFGS0).
//! [`optim`] wraps it, next to SGD, Adagrad and an undamped fixed-step
//! L-BFGS, into iterate-update loops driven by a [`StepSchedule`].
//! [`objectives`] and [`datasets`] provide the benchmark problems and
//! [`harness`] runs them and logs [`TrajectoryRecord`]s to CSV.
//!
//! ```
//! use sdlbfgs::{objectives::Rosenbrock, optim::{sdlbfgs_step, OptimizerState}};
//! use sdlbfgs::{BatchSeed, StepSchedule};
//!
//! let mut state = OptimizerState::sdlbfgs(Rosenbrock::START.to_vec(), 100).unwrap();
//! let schedule = StepSchedule::InverseSqrt { base: 1.0 };
//! for k in 0..10_000 {
//!     sdlbfgs_step(&mut state, &Rosenbrock, &schedule, BatchSeed::new(0, k)).unwrap();
//! }
//! let x = state.x();
//! assert!((x[0] - 1.0).abs() < 0.1 && (x[1] - 1.0).abs() < 0.1);
//! ```

pub mod datasets;
pub mod direction;
pub mod error;
pub mod harness;
mod linalg;
pub mod objectives;
pub mod optim;
pub mod schedule;
pub mod trajectory;

pub use direction::{CurvatureMemory, CurvaturePair, DampingConfig, Direction, InitMode};
pub use error::{Error, Result};
pub use harness::{run_experiment, Budget, Problem, RunConfig};
pub use objectives::{BatchSeed, Evaluation, GradientOracle};
pub use optim::{Optimizer, OptimizerKind, OptimizerState};
pub use schedule::StepSchedule;
pub use trajectory::{Flag, TrajectoryRecord};
