//! Browser bindings for the demo page in `www/`.
//!
//! Three operations: an optimizer path on the Rosenbrock valley, the damping
//! map `s'y -> (theta, s'y_bar)`, and a log-objective grid for the contour
//! background. Each has a plain Rust form (tested natively) and a
//! `wasm_bindgen` wrapper returning a `Float64Array`.

use sdlbfgs::direction::compute_theta;
use sdlbfgs::objectives::{rosenbrock_eval, Rosenbrock};
use sdlbfgs::{
    BatchSeed, DampingConfig, Error, Flag, Optimizer, OptimizerKind, OptimizerState, StepSchedule,
};
use wasm_bindgen::prelude::*;

/// Upper bound on iterations per call, to keep the page responsive.
pub const MAX_ITERS: u32 = 200_000;
/// Upper bound on contour grid cells per axis.
pub const MAX_GRID: u32 = 512;

/// `[x, y, f]` per iteration, starting at (-1.2, 1). The path stops early on
/// a converged or non-finite step; a non-finite step ends with one `NaN`
/// triple.
pub fn rosenbrock_path(
    optimizer: &str,
    iters: u32,
    memory: u32,
    delta: f64,
    lr: f64,
) -> Result<Vec<f64>, Error> {
    let kind = OptimizerKind::from_name(optimizer)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown optimizer {optimizer:?}")))?;
    if iters == 0 || iters > MAX_ITERS {
        return Err(Error::InvalidConfig(format!(
            "iterations must lie in 1..={MAX_ITERS}"
        )));
    }
    let x0 = Rosenbrock::START.to_vec();
    let memory = memory as usize;
    let (state, schedule) = match kind {
        OptimizerKind::SdLbfgs => (
            OptimizerState::sdlbfgs(x0, memory)?,
            StepSchedule::InverseSqrt { base: lr },
        ),
        OptimizerKind::SdLbfgs0 => (
            OptimizerState::sdlbfgs0(x0, memory, delta)?,
            StepSchedule::InverseSqrt { base: lr },
        ),
        OptimizerKind::Sgd => (
            OptimizerState::sgd(x0)?,
            StepSchedule::Constant { base: lr },
        ),
        OptimizerKind::Adagrad => (
            OptimizerState::adagrad(x0)?,
            StepSchedule::Constant { base: lr },
        ),
        OptimizerKind::Lbfgs => (
            OptimizerState::lbfgs(x0, memory, delta)?,
            StepSchedule::Constant { base: lr },
        ),
    };
    let mut opt = Optimizer::new(kind, state, schedule)?;

    let mut out = Vec::with_capacity(3 * iters as usize);
    for k in 0..u64::from(iters) {
        let x = opt.state().x().to_vec();
        match opt.step(&Rosenbrock, BatchSeed::new(0, k)) {
            Ok(rec) if rec.flag == Flag::Nonfinite => {
                out.extend([f64::NAN; 3]);
                break;
            }
            Ok(rec) => {
                out.extend([x[0], x[1], rec.objective]);
                if rec.flag == Flag::Converged {
                    break;
                }
            }
            Err(Error::NumericalFailure { .. }) => {
                out.extend([f64::NAN; 3]);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `[r, theta, r_bar]` for `samples` ratios `r = s'y / s'H0^{-1}s` evenly
/// spread over `[lo, hi]`, where `r_bar = s'y_bar / s'H0^{-1}s` after damping.
pub fn damping_map(lo: f64, hi: f64, samples: u32) -> Result<Vec<f64>, Error> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || samples < 2 {
        return Err(Error::InvalidConfig(
            "need a finite range lo < hi and at least 2 samples".into(),
        ));
    }
    let cfg = DampingConfig::identity();
    let mut out = Vec::with_capacity(3 * samples as usize);
    for i in 0..samples {
        let r = lo + (hi - lo) * f64::from(i) / f64::from(samples - 1);
        let theta = compute_theta(r, 1.0, &cfg)?;
        out.extend([r, theta, theta * r + (1.0 - theta)]);
    }
    Ok(out)
}

/// Row-major `ny x nx` grid of `log10(1 + f)` over the given box.
pub fn rosenbrock_grid(
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx: u32,
    ny: u32,
) -> Result<Vec<f64>, Error> {
    let ok_range = |a: f64, b: f64| a.is_finite() && b.is_finite() && a < b;
    if !ok_range(x_min, x_max) || !ok_range(y_min, y_max) {
        return Err(Error::InvalidConfig(
            "grid bounds must be finite and increasing".into(),
        ));
    }
    if !(2..=MAX_GRID).contains(&nx) || !(2..=MAX_GRID).contains(&ny) {
        return Err(Error::InvalidConfig(format!(
            "grid size must lie in 2..={MAX_GRID}"
        )));
    }
    let mut out = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        // first row is the top of the box
        let y = y_max - (y_max - y_min) * f64::from(j) / f64::from(ny - 1);
        for i in 0..nx {
            let x = x_min + (x_max - x_min) * f64::from(i) / f64::from(nx - 1);
            out.push(rosenbrock_eval([x, y]).0.ln_1p() / std::f64::consts::LN_10);
        }
    }
    Ok(out)
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = rosenbrockPath)]
pub fn rosenbrock_path_js(
    optimizer: &str,
    iters: u32,
    memory: u32,
    delta: f64,
    lr: f64,
) -> Result<Vec<f64>, JsError> {
    rosenbrock_path(optimizer, iters, memory, delta, lr).map_err(js_err)
}

#[wasm_bindgen(js_name = dampingMap)]
pub fn damping_map_js(lo: f64, hi: f64, samples: u32) -> Result<Vec<f64>, JsError> {
    damping_map(lo, hi, samples).map_err(js_err)
}

#[wasm_bindgen(js_name = rosenbrockGrid)]
pub fn rosenbrock_grid_js(
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx: u32,
    ny: u32,
) -> Result<Vec<f64>, JsError> {
    rosenbrock_grid(x_min, x_max, y_min, y_max, nx, ny).map_err(js_err)
}
