//! Damped limited-memory BFGS direction engine.
//!
//! The engine keeps a FIFO memory of damped curvature pairs `(s, y_bar, rho)`
//! and applies the implied inverse Hessian to a gradient with the two-loop
//! recursion. Two initializations are supported:
//!
//! * [`InitMode::Identity`]: `H_{k,0} = I` at every step and the resulting
//!   direction is scaled to unit Euclidean norm (SdLBFGS).
//! * [`InitMode::Gamma`]: `H_{k,0} = I / gamma_k` with
//!   `gamma_k = max(y'y / s'y, delta)` and no normalization (SdLBFGS0).
//!
//! Damping replaces `y` by `y_bar = theta * y + (1 - theta) * H0^{-1} s` so
//! that `s' y_bar` stays bounded away from zero, which keeps every implied
//! inverse Hessian positive definite.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm, sub};

/// One stored curvature pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    s: Vec<f64>,
    y_bar: Vec<f64>,
    rho: f64,
}

impl CurvaturePair {
    /// Builds a pair and computes `rho = 1 / (s . y_bar)`.
    ///
    /// Fails unless the vectors share a non-zero dimension and `s . y_bar` is
    /// finite and strictly positive.
    pub fn new(s: Vec<f64>, y_bar: Vec<f64>) -> Result<Self> {
        if s.is_empty() || s.len() != y_bar.len() {
            return Err(Error::InvalidInput(format!(
                "curvature pair dimensions {} and {}",
                s.len(),
                y_bar.len()
            )));
        }
        let sy = dot(&s, &y_bar);
        if !(sy.is_finite() && sy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "curvature pair needs s.y_bar > 0, got {sy:e}"
            )));
        }
        Ok(Self {
            s,
            y_bar,
            rho: 1.0 / sy,
        })
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn y_bar(&self) -> &[f64] {
        &self.y_bar
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }
}

/// Bounded FIFO of the most recent curvature pairs, oldest first.
#[derive(Debug, Clone)]
pub struct CurvatureMemory {
    capacity: usize,
    pairs: VecDeque<CurvaturePair>,
}

impl CurvatureMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig(
                "memory size must be at least 1".into(),
            ));
        }
        Ok(Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity.min(1024)),
        })
    }

    /// Appends a pair, evicting and returning the oldest one when full.
    pub fn push(&mut self, pair: CurvaturePair) -> Result<Option<CurvaturePair>> {
        if let Some(d) = self.dim() {
            if d != pair.dim() {
                return Err(Error::InvalidInput(format!(
                    "pair of dimension {} pushed into memory of dimension {d}",
                    pair.dim()
                )));
            }
        }
        let evicted = if self.pairs.len() == self.capacity {
            self.pairs.pop_front()
        } else {
            None
        };
        self.pairs.push_back(pair);
        Ok(evicted)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Dimension of the stored pairs, `None` while empty.
    pub fn dim(&self) -> Option<usize> {
        self.pairs.front().map(CurvaturePair::dim)
    }

    /// Pairs from oldest to newest.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &CurvaturePair> + ExactSizeIterator {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }
}

/// Choice of the initial inverse-Hessian approximation `H_{k,0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// `H_{k,0} = I` and unit-norm directions.
    Identity,
    /// `H_{k,0} = I / gamma_k` and raw directions.
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingConfig {
    pub mode: InitMode,
    /// Lower bound on `gamma_k`; only read in [`InitMode::Gamma`].
    pub delta: f64,
    /// Damping kicks in when `s'y < damping_threshold * s' H0^{-1} s`.
    pub damping_threshold: f64,
    /// Numerator constant of the damping coefficient `theta`.
    pub damping_numerator: f64,
    /// Directions shorter than this are reported as converged.
    pub normalization_floor: f64,
}

impl DampingConfig {
    pub const DEFAULT_DELTA: f64 = 0.01;
    pub const DEFAULT_NORMALIZATION_FLOOR: f64 = 1e-10;

    /// Identity initialization with normalized directions.
    pub fn identity() -> Self {
        Self {
            mode: InitMode::Identity,
            delta: Self::DEFAULT_DELTA,
            damping_threshold: 0.25,
            damping_numerator: 0.75,
            normalization_floor: Self::DEFAULT_NORMALIZATION_FLOOR,
        }
    }

    /// Gamma-scaled initialization with unnormalized directions.
    pub fn gamma(delta: f64) -> Self {
        Self {
            mode: InitMode::Gamma,
            delta,
            ..Self::identity()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if !open_unit(self.damping_threshold) || !open_unit(self.damping_numerator) {
            return Err(Error::InvalidConfig(
                "damping constants must lie in (0, 1)".into(),
            ));
        }
        if self.damping_numerator <= self.damping_threshold {
            return Err(Error::InvalidConfig(
                "damping numerator must exceed the damping threshold".into(),
            ));
        }
        if !(self.normalization_floor > 0.0) {
            return Err(Error::InvalidConfig(
                "normalization floor must be > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for DampingConfig {
    fn default() -> Self {
        Self::identity()
    }
}

/// Damping coefficient `theta` in `(0, 1]`.
///
/// `theta = num * sHs / (sHs - s'y)` when `s'y < threshold * sHs`, otherwise 1.
pub fn compute_theta(s_dot_y: f64, s_dot_hinv_s: f64, cfg: &DampingConfig) -> Result<f64> {
    if !s_dot_y.is_finite() || !s_dot_hinv_s.is_finite() {
        return Err(Error::InvalidInput("non-finite curvature products".into()));
    }
    if s_dot_hinv_s <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "s' H0^-1 s must be positive, got {s_dot_hinv_s:e}"
        )));
    }
    if s_dot_y < cfg.damping_threshold * s_dot_hinv_s {
        Ok(cfg.damping_numerator * s_dot_hinv_s / (s_dot_hinv_s - s_dot_y))
    } else {
        Ok(1.0)
    }
}

/// `gamma = max(y'y / s'y, delta)`, with `s'y = 0` mapped to `delta`.
pub fn compute_gamma(s: &[f64], y: &[f64], cfg: &DampingConfig) -> Result<f64> {
    if s.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "s has dimension {}, y has {}",
            s.len(),
            y.len()
        )));
    }
    if !all_finite(s) || !all_finite(y) {
        return Err(Error::InvalidInput("non-finite s or y".into()));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateStep("zero displacement"));
    }
    let sy = dot(s, y);
    if sy == 0.0 {
        return Ok(cfg.delta);
    }
    // f64::max drops a NaN ratio in favour of delta.
    Ok((dot(y, y) / sy).max(cfg.delta))
}

/// Builds the damped pair `(s, y_bar, rho)` for `H0^{-1} = hinv_scale * I`.
pub fn damp_pair(
    s: &[f64],
    y: &[f64],
    hinv_scale: f64,
    cfg: &DampingConfig,
) -> Result<CurvaturePair> {
    if s.len() != y.len() || s.is_empty() {
        return Err(Error::InvalidInput(format!(
            "s has dimension {}, y has {}",
            s.len(),
            y.len()
        )));
    }
    if !all_finite(s) {
        return Err(Error::DegenerateStep("non-finite displacement"));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateStep("zero displacement"));
    }
    if !all_finite(y) || !(hinv_scale.is_finite() && hinv_scale > 0.0) {
        return Err(Error::InvalidInput(
            "non-finite y or non-positive H0 scale".into(),
        ));
    }

    let s_dot_y = dot(s, y);
    let s_dot_hinv_s = hinv_scale * dot(s, s);
    if !s_dot_y.is_finite() || !s_dot_hinv_s.is_finite() {
        return Err(Error::PairSkipped {
            s_dot_y_bar: f64::NAN,
            floor: 0.0,
        });
    }
    if !(s_dot_hinv_s > 0.0) {
        // s is non-zero but s's underflowed
        return Err(Error::PairSkipped {
            s_dot_y_bar: 0.0,
            floor: 0.0,
        });
    }
    let theta = compute_theta(s_dot_y, s_dot_hinv_s, cfg)?;
    let y_bar: Vec<f64> = if theta == 1.0 {
        y.to_vec()
    } else {
        let mut y_bar: Vec<f64> = y
            .iter()
            .zip(s)
            .map(|(yi, si)| theta * yi + (1.0 - theta) * hinv_scale * si)
            .collect();
        // In exact arithmetic s'y_bar = (1 - num) * sHs; top up any rounding
        // shortfall along H0^{-1} s so the floor holds in floating point too.
        let target = (1.0 - cfg.damping_numerator) * s_dot_hinv_s * (1.0 + 8.0 * f64::EPSILON);
        for _ in 0..4 {
            let deficit = target - dot(s, &y_bar);
            if !(deficit > 0.0) {
                break;
            }
            axpy(2.0 * deficit / s_dot_hinv_s * hinv_scale, s, &mut y_bar);
        }
        y_bar
    };

    let s_dot_y_bar = dot(s, &y_bar);
    let floor = 1e-12 * norm(s) * norm(&y_bar);
    if !(s_dot_y_bar.is_finite() && s_dot_y_bar >= floor && s_dot_y_bar > 0.0) {
        return Err(Error::PairSkipped { s_dot_y_bar, floor });
    }
    Ok(CurvaturePair {
        s: s.to_vec(),
        y_bar,
        rho: 1.0 / s_dot_y_bar,
    })
}

/// Applies the inverse Hessian implied by `memory` and `H0 = h0_scale * I` to `g`.
///
/// The result is not normalized.
pub fn two_loop(memory: &CurvatureMemory, g: &[f64], h0_scale: f64) -> Result<Vec<f64>> {
    if let Some(d) = memory.dim() {
        if d != g.len() {
            return Err(Error::InvalidInput(format!(
                "gradient has dimension {}, memory has {d}",
                g.len()
            )));
        }
    }

    let mut u = g.to_vec();
    let mut mu = Vec::with_capacity(memory.len());
    for pair in memory.iter().rev() {
        let m = pair.rho * dot(&u, &pair.s);
        axpy(-m, &pair.y_bar, &mut u);
        mu.push(m);
    }

    u.iter_mut().for_each(|v| *v *= h0_scale);
    for (pair, m) in memory.iter().zip(mu.iter().rev()) {
        let nu = pair.rho * dot(&u, &pair.y_bar);
        axpy(m - nu, &pair.s, &mut u);
    }
    Ok(u)
}

/// Outcome of a direction computation.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    Step(Vec<f64>),
    /// The direction norm fell below the normalization floor.
    Converged,
}

impl Direction {
    pub fn as_step(&self) -> Option<&[f64]> {
        match self {
            Direction::Step(v) => Some(v),
            Direction::Converged => None,
        }
    }
}

pub fn normalize_direction(v: &[f64], floor: f64) -> Result<Direction> {
    if !all_finite(v) {
        return Err(Error::NonFinite("direction"));
    }
    let n = norm(v);
    if n < floor {
        return Ok(Direction::Converged);
    }
    Ok(Direction::Step(v.iter().map(|x| x / n).collect()))
}

/// Inputs to one direction computation at iterate `x_k`.
#[derive(Debug, Clone, Copy)]
pub struct DirectionInput<'a> {
    pub x: &'a [f64],
    /// Stochastic gradient at `x`, the vector the inverse Hessian is applied to.
    pub g: &'a [f64],
    /// Previous iterate and its gradient; `None` on the first iteration.
    pub prev: Option<(&'a [f64], &'a [f64])>,
    /// Gradient at `x` used to form `y = g_pair - g_prev`. Defaults to `g`;
    /// set it to a same-batch re-evaluation to reduce the noise in `y`.
    pub g_pair: Option<&'a [f64]>,
}

impl<'a> DirectionInput<'a> {
    pub fn first(x: &'a [f64], g: &'a [f64]) -> Self {
        Self {
            x,
            g,
            prev: None,
            g_pair: None,
        }
    }
}

/// One full step computation: form and damp the newest pair, push it, run the
/// two-loop recursion and (in identity mode) normalize.
///
/// Degenerate or skipped pairs leave the memory unchanged and the direction is
/// computed from what is already stored.
pub fn compute_direction(
    memory: &mut CurvatureMemory,
    cfg: &DampingConfig,
    input: DirectionInput<'_>,
) -> Result<Direction> {
    let d = input.x.len();
    if input.g.len() != d || input.g_pair.is_some_and(|g| g.len() != d) {
        return Err(Error::InvalidInput(
            "gradient and iterate dimensions differ".into(),
        ));
    }
    if !all_finite(input.g) {
        return Err(Error::NonFinite("gradient"));
    }

    let mut h0_scale = 1.0;
    if let Some((x_prev, g_prev)) = input.prev {
        if x_prev.len() != d || g_prev.len() != d {
            return Err(Error::InvalidInput("history dimensions differ".into()));
        }
        let s = sub(input.x, x_prev);
        let y = sub(input.g_pair.unwrap_or(input.g), g_prev);
        if all_finite(&s) && s.iter().any(|&v| v != 0.0) && all_finite(&y) {
            let hinv_scale = match cfg.mode {
                InitMode::Identity => 1.0,
                InitMode::Gamma => {
                    let gamma = compute_gamma(&s, &y, cfg)?;
                    if !gamma.is_finite() {
                        return Err(Error::NonFinite("gamma"));
                    }
                    h0_scale = 1.0 / gamma;
                    gamma
                }
            };
            match damp_pair(&s, &y, hinv_scale, cfg) {
                Ok(pair) => {
                    memory.push(pair)?;
                }
                Err(Error::PairSkipped { .. } | Error::DegenerateStep(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }

    let v = two_loop(memory, input.g, h0_scale)?;
    match cfg.mode {
        InitMode::Identity => normalize_direction(&v, cfg.normalization_floor),
        InitMode::Gamma if all_finite(&v) => Ok(Direction::Step(v)),
        InitMode::Gamma => Err(Error::NonFinite("direction")),
    }
}

/// Dense `d x d` inverse Hessian obtained by folding the BFGS update
/// `H <- (I - rho s y') H (I - rho y s') + rho s s'` over the stored pairs,
/// oldest first, from `H0 = h0_scale * I`.
///
/// Quadratic memory and cubic time in `d`; meant as a reference for small `d`.
pub fn dense_hessian_reconstruct(
    memory: &CurvatureMemory,
    h0_scale: f64,
    dim: usize,
) -> Result<Vec<Vec<f64>>> {
    if memory.dim().is_some_and(|d| d != dim) {
        return Err(Error::InvalidInput(format!(
            "requested dimension {dim}, memory has {}",
            memory.dim().unwrap_or(0)
        )));
    }
    let mut h = vec![vec![0.0; dim]; dim];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = h0_scale;
    }

    for pair in memory.iter() {
        let (s, y, rho) = (pair.s(), pair.y_bar(), pair.rho());
        // v = I - rho * y s'
        let mut v = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                v[i][j] = f64::from(u8::from(i == j)) - rho * y[i] * s[j];
            }
        }
        // h_v = H * V
        let mut hv = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                hv[i][j] = (0..dim).map(|l| h[i][l] * v[l][j]).sum();
            }
        }
        // H = V' * (H V) + rho s s'
        for i in 0..dim {
            for j in 0..dim {
                let vt_hv: f64 = (0..dim).map(|l| v[l][i] * hv[l][j]).sum();
                h[i][j] = vt_hv + rho * s[i] * s[j];
            }
        }
    }
    Ok(h)
}
