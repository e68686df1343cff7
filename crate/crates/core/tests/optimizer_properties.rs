use proptest::prelude::*;
use sdlbfgs::datasets::synthetic_blobs;
use sdlbfgs::objectives::{LogisticRegression, Quadratic, Rosenbrock};
use sdlbfgs::optim::{adagrad_step, sdlbfgs_step};
use sdlbfgs::{
    run_experiment, BatchSeed, Budget, Flag, GradientOracle, Optimizer, OptimizerKind,
    OptimizerState, Problem, RunConfig, StepSchedule,
};

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn state_for(kind: OptimizerKind, x0: Vec<f64>) -> OptimizerState {
    match kind {
        OptimizerKind::SdLbfgs => OptimizerState::sdlbfgs(x0, 10).unwrap(),
        OptimizerKind::SdLbfgs0 => OptimizerState::sdlbfgs0(x0, 10, 0.01).unwrap(),
        OptimizerKind::Sgd => OptimizerState::sgd(x0).unwrap(),
        OptimizerKind::Adagrad => OptimizerState::adagrad(x0).unwrap(),
        OptimizerKind::Lbfgs => OptimizerState::lbfgs(x0, 10, 1.0).unwrap(),
    }
}

#[test]
fn identical_inputs_give_bitwise_identical_trajectories() {
    let data = synthetic_blobs(40, 3, 5, 2.0, 11).unwrap();
    let oracle = LogisticRegression::new(data, 1e-3, 16).unwrap();
    for kind in OptimizerKind::ALL {
        let schedule = if kind.is_quasi_newton() {
            StepSchedule::InverseSqrt { base: 1.0 }
        } else {
            StepSchedule::Constant { base: 0.05 }
        };
        let run = || {
            let mut opt =
                Optimizer::new(kind, state_for(kind, vec![0.0; oracle.dim()]), schedule).unwrap();
            (0..200)
                .map(|k| opt.step(&oracle, BatchSeed::new(5, k)).unwrap())
                .collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(
                p.objective.to_bits(),
                q.objective.to_bits(),
                "{}",
                kind.name()
            );
            assert_eq!(
                p.grad_norm.to_bits(),
                q.grad_norm.to_bits(),
                "{}",
                kind.name()
            );
            assert_eq!(p.flag, q.flag);
        }
    }
}

#[test]
fn harness_runs_repeat_exactly_on_every_builtin_problem() {
    for problem in [
        Problem::Rosenbrock2d,
        Problem::Quadratic,
        Problem::LogregSynth,
    ] {
        for kind in OptimizerKind::ALL {
            let mut cfg = RunConfig::new(kind, problem);
            cfg.budget = Budget::Iterations(300);
            cfg.seed = 9;
            let a = run_experiment(&cfg).unwrap();
            let b = run_experiment(&cfg).unwrap();
            let lines = |r: &[sdlbfgs::TrajectoryRecord]| {
                r.iter().map(|x| x.to_csv_line()).collect::<Vec<_>>()
            };
            assert_eq!(
                lines(&a),
                lines(&b),
                "{} on {}",
                kind.name(),
                problem.name()
            );
        }
    }
}

#[test]
fn every_run_ends_with_a_valid_flag_and_increasing_iterations() {
    for problem in [
        Problem::Rosenbrock2d,
        Problem::Quadratic,
        Problem::LogregSynth,
    ] {
        for kind in OptimizerKind::ALL {
            // a step size large enough to make the baselines blow up on Rosenbrock
            for base in [0.01, 1.0, 10.0] {
                let mut cfg = RunConfig::new(kind, problem);
                cfg.schedule = StepSchedule::Constant { base };
                cfg.budget = Budget::Iterations(500);
                let recs = run_experiment(&cfg).unwrap();
                assert!(recs.windows(2).all(|w| w[1].iter == w[0].iter + 1));
                let nonfinite = recs.iter().filter(|r| r.flag == Flag::Nonfinite).count();
                assert!(
                    nonfinite == 0
                        || (nonfinite == 1 && recs.last().unwrap().flag == Flag::Nonfinite)
                );
            }
        }
    }
}

#[test]
fn oracle_is_unchanged_by_stepping() {
    let data = synthetic_blobs(30, 2, 4, 2.0, 1).unwrap();
    let oracle = LogisticRegression::new(data, 1e-2, 8).unwrap();
    let x = vec![0.1; oracle.dim()];
    let before = oracle.full_eval(&x).unwrap();
    let mut opt = Optimizer::new(
        OptimizerKind::SdLbfgs,
        OptimizerState::sdlbfgs(vec![0.0; oracle.dim()], 5).unwrap(),
        StepSchedule::InverseSqrt { base: 1.0 },
    )
    .unwrap();
    for k in 0..50 {
        opt.step(&oracle, BatchSeed::new(0, k)).unwrap();
    }
    assert_eq!(oracle.full_eval(&x).unwrap(), before);
}

#[test]
fn adagrad_accumulator_never_shrinks() {
    let mut state = OptimizerState::adagrad(Rosenbrock::START.to_vec()).unwrap();
    let mut prev = state.accumulator().unwrap().to_vec();
    for k in 0..500 {
        adagrad_step(&mut state, &Rosenbrock, 0.05, 1e-10, BatchSeed::new(0, k)).unwrap();
        let acc = state.accumulator().unwrap();
        assert!(acc.iter().zip(&prev).all(|(a, p)| a >= p));
        prev = acc.to_vec();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdlbfgs_steps_have_length_alpha(
        x0 in prop::collection::vec(-3.0f64..3.0, 2),
        base in 0.01f64..2.0,
        steps in 1u64..60,
    ) {
        let sched = StepSchedule::InverseSqrt { base };
        let mut state = OptimizerState::sdlbfgs(x0, 8).unwrap();
        for k in 0..steps {
            let before = state.x().to_vec();
            let rec = sdlbfgs_step(&mut state, &Rosenbrock, &sched, BatchSeed::new(0, k)).unwrap();
            let moved = norm(&before.iter().zip(state.x()).map(|(a, b)| a - b).collect::<Vec<_>>());
            if rec.flag == Flag::Converged {
                prop_assert_eq!(moved, 0.0);
                break;
            }
            // x + alpha d is rounded per coordinate, so allow a few ulps of |x|
            prop_assert!((moved - rec.alpha).abs() <= 1e-12 * (1.0 + norm(&before)), "{moved} vs {}", rec.alpha);
            prop_assert_eq!(state.k(), k + 2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Reference runs from 18 starts with `|x| <= 10` in dimensions 2 and 5
    /// needed at most 2,696 iterations; the 1e5 bound leaves a wide margin.
    #[test]
    fn sdlbfgs_solves_the_quadratic_from_any_bounded_start(
        dir in prop::collection::vec(-1.0f64..1.0, 2..=6),
        radius in 0.0f64..=10.0,
    ) {
        let n = norm(&dir);
        prop_assume!(n > 1e-3);
        let x0: Vec<f64> = dir.iter().map(|v| v / n * radius).collect();
        let q = Quadratic { dim: x0.len() };
        let sched = StepSchedule::InverseSqrt { base: 1.0 };
        let mut state = OptimizerState::sdlbfgs(x0, 100).unwrap();
        let mut reached = None;
        for k in 0..100_000u64 {
            let rec = sdlbfgs_step(&mut state, &q, &sched, BatchSeed::new(0, k)).unwrap();
            if rec.objective < 1e-6 {
                reached = Some(rec.iter);
                break;
            }
        }
        prop_assert!(reached.is_some(), "did not reach 1e-6 from radius {radius}");
    }
}
