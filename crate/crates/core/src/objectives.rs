//! Objectives with analytic (stochastic) gradients behind [`GradientOracle`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::Dataset;
use crate::error::{Error, Result};

/// Identifies one minibatch: the `step`-th batch (0-based) of run `run`.
///
/// Batches are consecutive slices of a per-epoch shuffle seeded by
/// `(run, epoch)`, so every batch can be rebuilt in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatchSeed {
    pub run: u64,
    pub step: u64,
}

impl BatchSeed {
    pub fn new(run: u64, step: u64) -> Self {
        Self { run, step }
    }
}

/// Objective value and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// Objective and gradient on the minibatch named by `batch`.
    /// Deterministic objectives ignore `batch`.
    fn eval(&self, x: &[f64], batch: BatchSeed) -> Result<Evaluation>;

    /// Objective and gradient over the whole dataset.
    fn full_eval(&self, x: &[f64]) -> Result<Evaluation>;
}

fn check_dim(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::InvalidInput(format!(
            "point has dimension {}, objective expects {dim}",
            x.len()
        )));
    }
    Ok(())
}

/// `f(x, y) = 100 (x^2 - y)^2 + (x - 1)^2`
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock;

impl Rosenbrock {
    pub const START: [f64; 2] = [-1.2, 1.0];
}

pub fn rosenbrock_eval(x: [f64; 2]) -> (f64, [f64; 2]) {
    let [a, b] = x;
    let r = a * a - b;
    let f = 100.0 * r * r + (a - 1.0) * (a - 1.0);
    (f, [400.0 * a * r + 2.0 * (a - 1.0), -200.0 * r])
}

impl GradientOracle for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], _batch: BatchSeed) -> Result<Evaluation> {
        self.full_eval(x)
    }

    fn full_eval(&self, x: &[f64]) -> Result<Evaluation> {
        check_dim(x, 2)?;
        let (value, grad) = rosenbrock_eval([x[0], x[1]]);
        Ok(Evaluation {
            value,
            grad: grad.to_vec(),
        })
    }
}

/// `f(x) = |x|^2 / 2`
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub dim: usize,
}

impl GradientOracle for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], _batch: BatchSeed) -> Result<Evaluation> {
        self.full_eval(x)
    }

    fn full_eval(&self, x: &[f64]) -> Result<Evaluation> {
        check_dim(x, self.dim)?;
        Ok(Evaluation {
            value: 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            grad: x.to_vec(),
        })
    }
}

/// Seeded epoch-shuffled minibatch indexing over `n` examples.
#[derive(Debug, Clone, Copy)]
pub struct Minibatcher {
    n: usize,
    batch_size: usize,
}

impl Minibatcher {
    pub fn new(n: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if batch_size > n {
            return Err(Error::InvalidConfig(format!(
                "batch size {batch_size} exceeds dataset size {n}"
            )));
        }
        Ok(Self { n, batch_size })
    }

    /// Full batches per epoch; the `n mod batch_size` leftover examples of
    /// each shuffle are not visited in that epoch.
    pub fn batches_per_epoch(&self) -> u64 {
        (self.n / self.batch_size) as u64
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn indices(&self, seed: BatchSeed) -> Vec<usize> {
        let per_epoch = self.batches_per_epoch();
        let epoch = seed.step / per_epoch;
        let pos = (seed.step % per_epoch) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.run);
        rng.set_stream(epoch);
        let mut perm: Vec<usize> = (0..self.n).collect();
        perm.shuffle(&mut rng);
        perm.truncate((pos + 1) * self.batch_size);
        perm.drain(..pos * self.batch_size);
        perm
    }
}

/// Numerically stable softmax in place; returns `log(sum(exp(z)))`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    m + sum.ln()
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Models that turn a parameter vector into class predictions.
pub trait Classifier {
    fn predict(&self, params: &[f64], features: &[f64]) -> usize;

    fn accuracy(&self, params: &[f64], data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.len())
            .filter(|&i| self.predict(params, data.row(i)) == data.labels()[i])
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Multinomial logistic regression with an L2 penalty on the weights.
///
/// Parameters: `C x d` weights (row-major) followed by `C` unpenalized biases.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: Dataset,
    l2: f64,
    batches: Minibatcher,
}

impl LogisticRegression {
    pub fn new(data: Dataset, l2: f64, batch_size: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidConfig("empty dataset".into()));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2 must be >= 0, got {l2}")));
        }
        let batches = Minibatcher::new(data.len(), batch_size)?;
        Ok(Self { data, l2, batches })
    }

    pub fn batches(&self) -> &Minibatcher {
        &self.batches
    }

    fn logits(&self, params: &[f64], features: &[f64], out: &mut [f64]) {
        let d = self.data.dim();
        let bias = &params[out.len() * d..];
        for (c, o) in out.iter_mut().enumerate() {
            let w = &params[c * d..(c + 1) * d];
            *o = bias[c] + w.iter().zip(features).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn loss_over(&self, x: &[f64], rows: impl ExactSizeIterator<Item = usize>) -> Evaluation {
        let (d, c) = (self.data.dim(), self.data.num_classes());
        let m = rows.len() as f64;
        let mut grad = vec![0.0; self.dim()];
        let mut loss = 0.0;
        let mut p = vec![0.0; c];
        for i in rows {
            let xi = self.data.row(i);
            let yi = self.data.labels()[i];
            self.logits(x, xi, &mut p);
            let z_true = p[yi];
            loss += softmax_in_place(&mut p) - z_true;
            p[yi] -= 1.0;
            for (k, &err) in p.iter().enumerate() {
                let gw = &mut grad[k * d..(k + 1) * d];
                for (g, &f) in gw.iter_mut().zip(xi) {
                    *g += err * f;
                }
                grad[c * d + k] += err;
            }
        }
        grad.iter_mut().for_each(|g| *g /= m);
        let weights = &x[..c * d];
        let penalty = 0.5 * self.l2 * weights.iter().map(|w| w * w).sum::<f64>();
        for (g, w) in grad.iter_mut().zip(weights) {
            *g += self.l2 * w;
        }
        Evaluation {
            value: loss / m + penalty,
            grad,
        }
    }
}

impl GradientOracle for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.num_classes() * (self.data.dim() + 1)
    }

    fn eval(&self, x: &[f64], batch: BatchSeed) -> Result<Evaluation> {
        check_dim(x, self.dim())?;
        Ok(self.loss_over(x, self.batches.indices(batch).into_iter()))
    }

    fn full_eval(&self, x: &[f64]) -> Result<Evaluation> {
        check_dim(x, self.dim())?;
        Ok(self.loss_over(x, 0..self.data.len()))
    }
}

impl Classifier for LogisticRegression {
    fn predict(&self, params: &[f64], features: &[f64]) -> usize {
        let mut z = vec![0.0; self.data.num_classes()];
        self.logits(params, features, &mut z);
        argmax(&z)
    }
}

/// Fully connected network with sigmoid hidden layers and a softmax output,
/// trained on mean cross-entropy.
///
/// Parameters are one flat vector; for each layer the `out x in` weights
/// (row-major) come first, then the `out` biases.
#[derive(Debug, Clone)]
pub struct Mlp {
    data: Dataset,
    layers: Vec<usize>,
    batches: Minibatcher,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Mlp {
    pub fn new(data: Dataset, layers: &[usize], batch_size: usize) -> Result<Self> {
        if layers.len() < 2 || layers.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {layers:?}")));
        }
        if layers[0] != data.dim() {
            return Err(Error::InvalidConfig(format!(
                "input width {} does not match feature dimension {}",
                layers[0],
                data.dim()
            )));
        }
        if *layers.last().unwrap() != data.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "output width {} does not match {} classes",
                layers.last().unwrap(),
                data.num_classes()
            )));
        }
        if data.is_empty() {
            return Err(Error::InvalidConfig("empty dataset".into()));
        }
        let batches = Minibatcher::new(data.len(), batch_size)?;
        Ok(Self {
            data,
            layers: layers.to_vec(),
            batches,
        })
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn batches(&self) -> &Minibatcher {
        &self.batches
    }

    /// Offsets of (weights, biases) for each layer in the flat vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut at = 0;
        self.layers
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let off = (at, at + fan_in * fan_out);
                at += fan_out * (fan_in + 1);
                off
            })
            .collect()
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.dim());
        for w in self.layers.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            params.extend((0..w[1] * (w[0] + 1)).map(|_| rng.random_range(-bound..=bound)));
        }
        params
    }

    /// Activations of every layer; the last one holds softmax probabilities.
    fn forward(&self, params: &[f64], input: &[f64], offsets: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        let last = offsets.len() - 1;
        for (l, &(w_at, b_at)) in offsets.iter().enumerate() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let prev = &acts[l];
            let mut z: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let w = &params[w_at + j * fan_in..w_at + (j + 1) * fan_in];
                    params[b_at + j] + w.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l == last {
                softmax_in_place(&mut z);
            } else {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            acts.push(z);
        }
        acts
    }

    fn loss_over(&self, x: &[f64], rows: impl ExactSizeIterator<Item = usize>) -> Evaluation {
        let offsets = self.offsets();
        let m = rows.len() as f64;
        let mut grad = vec![0.0; x.len()];
        let mut loss = 0.0;
        for i in rows {
            let acts = self.forward(x, self.data.row(i), &offsets);
            let label = self.data.labels()[i];
            let probs = acts.last().unwrap();
            loss -= probs[label].max(f64::MIN_POSITIVE).ln();

            // delta at the output pre-activation
            let mut delta = probs.clone();
            delta[label] -= 1.0;
            for l in (0..offsets.len()).rev() {
                let (w_at, b_at) = offsets[l];
                let fan_in = self.layers[l];
                let prev = &acts[l];
                for (j, &dj) in delta.iter().enumerate() {
                    let gw = &mut grad[w_at + j * fan_in..w_at + (j + 1) * fan_in];
                    for (g, &a) in gw.iter_mut().zip(prev) {
                        *g += dj * a;
                    }
                    grad[b_at + j] += dj;
                }
                if l > 0 {
                    delta = (0..fan_in)
                        .map(|k| {
                            let back: f64 = delta
                                .iter()
                                .enumerate()
                                .map(|(j, &dj)| dj * x[w_at + j * fan_in + k])
                                .sum();
                            back * prev[k] * (1.0 - prev[k])
                        })
                        .collect();
                }
            }
        }
        grad.iter_mut().for_each(|g| *g /= m);
        Evaluation {
            value: loss / m,
            grad,
        }
    }
}

impl GradientOracle for Mlp {
    fn dim(&self) -> usize {
        self.layers.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn eval(&self, x: &[f64], batch: BatchSeed) -> Result<Evaluation> {
        check_dim(x, self.dim())?;
        Ok(self.loss_over(x, self.batches.indices(batch).into_iter()))
    }

    fn full_eval(&self, x: &[f64]) -> Result<Evaluation> {
        check_dim(x, self.dim())?;
        Ok(self.loss_over(x, 0..self.data.len()))
    }
}

impl Classifier for Mlp {
    fn predict(&self, params: &[f64], features: &[f64]) -> usize {
        let acts = self.forward(params, features, &self.offsets());
        argmax(acts.last().unwrap())
    }
}

/// Largest per-coordinate `|g_i - fd_i| / (1 + |g_i|)` between the analytic
/// gradient and central differences with step `h`, all on batch `batch`.
pub fn finite_difference_check(
    oracle: &dyn GradientOracle,
    x: &[f64],
    h: f64,
    batch: BatchSeed,
) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let analytic = oracle.eval(x, batch)?;
    if !analytic.value.is_finite() || analytic.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("analytic evaluation"));
    }
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.grad.iter().enumerate() {
        probe[i] = x[i] + h;
        let up = oracle.eval(&probe, batch)?.value;
        probe[i] = x[i] - h;
        let down = oracle.eval(&probe, batch)?.value;
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((g - fd).abs() / (1.0 + g.abs()));
    }
    Ok(worst)
}
