//! Losses, gradients, optimizers and the mini-batch training loop.

use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Angle, ShiftRule};
use crate::data::signed_label;
use crate::error::{invalid, QcnnError, Result};
use crate::model::Model;
use crate::simulator::{apply_mat4, mat4_adjoint, pair_overlap, readout_raw, Mat4, Readout, C64};

/// Probability clamp for the cross-entropy loss.
pub const PROB_EPS: f64 = 1e-10;
/// Step for the central finite-difference oracle.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    CrossEntropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Nesterov,
    Adam,
}

/// How per-sample losses combine into the optimized batch objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

impl Loss {
    /// Cross-entropy is summed over the batch, MSE averaged.
    pub fn default_reduction(self) -> Reduction {
        match self {
            Loss::Mse => Reduction::Mean,
            Loss::CrossEntropy => Reduction::Sum,
        }
    }
}

/// `Adjoint` and `ParameterShift` are exact and agree to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Adjoint,
    ParameterShift,
    FiniteDifference,
}

macro_rules! string_enum {
    ($ty:ty, $( $variant:path => [$canon:literal $(, $alias:literal)*] ),+ $(,)?) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $( $variant => $canon ),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = QcnnError;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $( $canon $(| $alias)* => Ok($variant), )+
                    other => Err(invalid!("unknown {} `{other}`", stringify!($ty).to_ascii_lowercase())),
                }
            }
        }
    };
}

string_enum!(Loss, Loss::Mse => ["mse"], Loss::CrossEntropy => ["ce", "xent", "cross_entropy"]);
string_enum!(Reduction, Reduction::Mean => ["mean"], Reduction::Sum => ["sum"]);
string_enum!(Optimizer, Optimizer::Nesterov => ["nesterov"], Optimizer::Adam => ["adam"]);
string_enum!(
    GradientMethod,
    GradientMethod::Adjoint => ["adjoint"],
    GradientMethod::ParameterShift => ["parameter_shift", "shift"],
    GradientMethod::FiniteDifference => ["finite_difference", "fd"],
);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: Loss,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub gradient: GradientMethod,
    pub momentum: f64,
    /// `None` uses [`Loss::default_reduction`].
    #[serde(default)]
    pub reduction: Option<Reduction>,
}

impl TrainConfig {
    pub fn effective_reduction(&self) -> Reduction {
        self.reduction.unwrap_or(self.loss.default_reduction())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::CrossEntropy,
            optimizer: Optimizer::Nesterov,
            learning_rate: 0.01,
            batch_size: 25,
            iterations: 200,
            gradient: GradientMethod::Adjoint,
            momentum: 0.9,
            reduction: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub model_hash: String,
    pub seed: u64,
    /// Mean batch loss at the parameters held before each step, whatever the reduction.
    pub loss_trace: Vec<f64>,
    pub wall_time_s: f64,
    pub params: Vec<f64>,
    pub test_accuracy: Option<f64>,
}

pub(crate) fn check_batch(z_len: usize, y_len: usize) -> Result<()> {
    if z_len == 0 {
        return Err(invalid!("empty batch"));
    }
    if z_len != y_len {
        return Err(invalid!("{z_len} predictions but {y_len} labels"));
    }
    Ok(())
}

/// Mean of `(z - (1 - 2y))^2`.
pub fn loss_mse(z: &[f64], labels: &[u8]) -> Result<f64> {
    check_batch(z.len(), labels.len())?;
    Ok(z.iter()
        .zip(labels)
        .map(|(z, &y)| (z - signed_label(y)).powi(2))
        .sum::<f64>()
        / z.len() as f64)
}

/// Negated mean log-likelihood with probabilities clamped to `[eps, 1 - eps]`.
pub fn loss_xent(p1: &[f64], labels: &[u8]) -> Result<f64> {
    check_batch(p1.len(), labels.len())?;
    let total: f64 = p1
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / p1.len() as f64)
}

fn sample_loss(loss: Loss, r: &Readout, y: u8) -> f64 {
    match loss {
        Loss::Mse => (r.z_expectation - signed_label(y)).powi(2),
        Loss::CrossEntropy => {
            let p = r.p1.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        }
    }
}

/// `d loss / d z` for one sample, using `p1 = (1 - z) / 2`.
fn dloss_dz(loss: Loss, r: &Readout, y: u8) -> f64 {
    match loss {
        Loss::Mse => 2.0 * (r.z_expectation - signed_label(y)),
        Loss::CrossEntropy => {
            let p1 = r.p1;
            if y == 1 {
                if p1 <= PROB_EPS || p1 >= 1.0 - PROB_EPS {
                    0.0
                } else {
                    0.5 / p1
                }
            } else {
                let p0 = 1.0 - p1;
                if p0 <= PROB_EPS || p0 >= 1.0 - PROB_EPS {
                    0.0
                } else {
                    -0.5 / p0
                }
            }
        }
    }
}

pub fn batch_loss(
    model: &Model,
    params: &[f64],
    xs: &[&[f64]],
    ys: &[u8],
    loss: Loss,
) -> Result<f64> {
    check_batch(xs.len(), ys.len())?;
    let bound = model.bind(params)?;
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        total += sample_loss(loss, &bound.forward(x)?, y);
    }
    Ok(total / xs.len() as f64)
}

/// Block matrices and their parameter derivatives for one parameter vector.
struct DerivativeCache {
    mats: Vec<Mat4>,
    adjoints: Vec<Mat4>,
    /// Per op: `(global parameter index, d block / d parameter)`.
    derivs: Vec<Vec<(usize, Mat4)>>,
}

impl DerivativeCache {
    fn new(model: &Model, params: &[f64]) -> Self {
        let mut mats = Vec::with_capacity(model.ops().len());
        let mut derivs = Vec::with_capacity(model.ops().len());
        for op in model.ops() {
            let (m, d) = model
                .template(op.kind)
                .with_derivatives(model.op_params(op, params));
            mats.push(m);
            derivs.push(
                d.into_iter()
                    .map(|(slot, dm)| (op.offset + slot, dm))
                    .collect(),
            );
        }
        let adjoints = mats.iter().map(mat4_adjoint).collect();
        Self {
            mats,
            adjoints,
            derivs,
        }
    }

    /// Readout and `weight * dz/dtheta` accumulated into `grad` by reverse-mode sweep.
    fn accumulate(
        &self,
        model: &Model,
        input: Vec<C64>,
        weight_of: impl FnOnce(&Readout) -> f64,
        grad: &mut [f64],
    ) -> Readout {
        let n = model.spec().n_qubits();
        let readout_q = model.plan().readout;
        let ops = model.ops();
        let mut psi = input;
        for (op, m) in ops.iter().zip(&self.mats) {
            apply_mat4(&mut psi, n, m, op.q_a, op.q_b);
        }
        let r = readout_raw(&psi, n, readout_q);
        let w = weight_of(&r);
        if w == 0.0 {
            return r;
        }
        // lambda = Z_readout psi
        let bit = 1usize << (n - 1 - readout_q);
        let mut lambda: Vec<C64> = psi
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { *a } else { -*a })
            .collect();
        for j in (0..ops.len()).rev() {
            let op = &ops[j];
            apply_mat4(&mut psi, n, &self.adjoints[j], op.q_a, op.q_b);
            if !self.derivs[j].is_empty() {
                let overlap = pair_overlap(&lambda, &psi, n, op.q_a, op.q_b);
                for (k, dm) in &self.derivs[j] {
                    let mut s = C64::new(0.0, 0.0);
                    for r in 0..4 {
                        for c in 0..4 {
                            s += dm[r][c] * overlap[r][c];
                        }
                    }
                    grad[*k] += w * 2.0 * s.re;
                }
            }
            apply_mat4(&mut lambda, n, &self.adjoints[j], op.q_a, op.q_b);
        }
        r
    }
}

/// Readout and `dz/dtheta` by the gate-level parameter-shift rule, summing over
/// every occurrence of a shared parameter.
pub fn readout_gradient_shift(
    model: &Model,
    params: &[f64],
    x: &[f64],
) -> Result<(Readout, Vec<f64>)> {
    model.check_params(params)?;
    let n = model.spec().n_qubits();
    let ops = model.ops();
    let readout_q = model.plan().readout;
    let mut states = Vec::with_capacity(ops.len() + 1);
    let mut psi = model.spec().encoding.encode_amplitudes(x)?;
    let mats: Vec<Mat4> = ops
        .iter()
        .map(|op| {
            model
                .template(op.kind)
                .compose(model.op_params(op, params), None)
        })
        .collect();
    for (op, m) in ops.iter().zip(&mats) {
        states.push(psi.clone());
        apply_mat4(&mut psi, n, m, op.q_a, op.q_b);
    }
    let r = readout_raw(&psi, n, readout_q);
    let mut grad = vec![0.0; params.len()];
    let run_from = |j: usize, shifted: &Mat4| -> f64 {
        let mut s = states[j].clone();
        apply_mat4(&mut s, n, shifted, ops[j].q_a, ops[j].q_b);
        for (op, m) in ops[j + 1..].iter().zip(&mats[j + 1..]) {
            apply_mat4(&mut s, n, m, op.q_a, op.q_b);
        }
        readout_raw(&s, n, readout_q).z_expectation
    };
    let c_plus = (SQRT_2 + 1.0) / (4.0 * SQRT_2);
    let c_minus = (SQRT_2 - 1.0) / (4.0 * SQRT_2);
    for (j, op) in ops.iter().enumerate() {
        let template = model.template(op.kind);
        let local = model.op_params(op, params);
        for (g, gate) in template.gates().iter().enumerate() {
            let Angle::Slot(slot) = gate.angle else {
                continue;
            };
            let f = |delta: f64| run_from(j, &template.compose(local, Some((g, delta))));
            let d = match gate.shift_rule() {
                Some(ShiftRule::TwoTerm) => 0.5 * (f(FRAC_PI_2) - f(-FRAC_PI_2)),
                Some(ShiftRule::FourTerm) => {
                    c_plus * (f(FRAC_PI_2) - f(-FRAC_PI_2))
                        - c_minus * (f(3.0 * FRAC_PI_2) - f(-3.0 * FRAC_PI_2))
                }
                None => continue,
            };
            grad[op.offset + slot] += d;
        }
    }
    Ok((r, grad))
}

/// Readout and `dz/dtheta` by reverse-mode differentiation.
pub fn readout_gradient_adjoint(
    model: &Model,
    params: &[f64],
    x: &[f64],
) -> Result<(Readout, Vec<f64>)> {
    model.check_params(params)?;
    let cache = DerivativeCache::new(model, params);
    let mut grad = vec![0.0; params.len()];
    let r = cache.accumulate(
        model,
        model.spec().encoding.encode_amplitudes(x)?,
        |_| 1.0,
        &mut grad,
    );
    Ok((r, grad))
}

/// Batch loss and its gradient.
pub fn gradient(
    model: &Model,
    params: &[f64],
    xs: &[&[f64]],
    ys: &[u8],
    loss: Loss,
    method: GradientMethod,
) -> Result<(f64, Vec<f64>)> {
    check_batch(xs.len(), ys.len())?;
    model.check_params(params)?;
    let n = xs.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    match method {
        GradientMethod::Adjoint => {
            let cache = DerivativeCache::new(model, params);
            for (x, &y) in xs.iter().zip(ys) {
                let input = model.spec().encoding.encode_amplitudes(x)?;
                let r = cache.accumulate(model, input, |r| dloss_dz(loss, r, y) / n, &mut grad);
                total += sample_loss(loss, &r, y);
            }
        }
        GradientMethod::ParameterShift => {
            for (x, &y) in xs.iter().zip(ys) {
                let (r, dz) = readout_gradient_shift(model, params, x)?;
                let w = dloss_dz(loss, &r, y) / n;
                grad.iter_mut().zip(&dz).for_each(|(g, d)| *g += w * d);
                total += sample_loss(loss, &r, y);
            }
        }
        GradientMethod::FiniteDifference => {
            let mut p = params.to_vec();
            for k in 0..params.len() {
                p[k] = params[k] + FD_STEP;
                let up = batch_loss(model, &p, xs, ys, loss)?;
                p[k] = params[k] - FD_STEP;
                let dn = batch_loss(model, &p, xs, ys, loss)?;
                p[k] = params[k];
                grad[k] = (up - dn) / (2.0 * FD_STEP);
            }
            return Ok((batch_loss(model, params, xs, ys, loss)?, grad));
        }
    }
    Ok((total / n, grad))
}

pub(crate) fn nan_check(iteration: usize, loss: f64, grad: &[f64]) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(QcnnError::TrainingFailure {
            iteration,
            message: format!("non-finite loss or gradient (loss = {loss})"),
        });
    }
    Ok(())
}

/// Runs `config.iterations` optimizer steps from `params`, drawing batches from `rng`.
/// `loss` gives the mean batch loss and `grad` the mean loss and gradient; the
/// reduction scale is applied here. Returns the recorded loss trace.
pub(crate) fn optimize<L, G>(
    config: &TrainConfig,
    params: &mut [f64],
    n_samples: usize,
    rng: &mut ChaCha8Rng,
    mut loss: L,
    mut grad: G,
) -> Result<Vec<f64>>
where
    L: FnMut(&[f64], &[usize]) -> Result<f64>,
    G: FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
{
    if config.batch_size == 0 || config.batch_size > n_samples {
        return Err(invalid!(
            "batch size {} invalid for {n_samples} samples",
            config.batch_size
        ));
    }
    let dim = params.len();
    let mut trace = Vec::with_capacity(config.iterations);
    let mut velocity = vec![0.0; dim];
    let (mut m, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    let scale = match config.effective_reduction() {
        Reduction::Mean => 1.0,
        Reduction::Sum => config.batch_size as f64,
    };
    for it in 0..config.iterations {
        let idx = sample(rng, n_samples, config.batch_size).into_vec();
        match config.optimizer {
            Optimizer::Nesterov => {
                let current = loss(params, &idx)?;
                let look: Vec<f64> = params
                    .iter()
                    .zip(&velocity)
                    .map(|(p, a)| p - config.momentum * a)
                    .collect();
                let (_, g) = grad(&look, &idx)?;
                nan_check(it, current, &g)?;
                trace.push(current);
                for k in 0..dim {
                    velocity[k] =
                        config.momentum * velocity[k] + config.learning_rate * scale * g[k];
                    params[k] -= velocity[k];
                }
            }
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                let (current, g) = grad(params, &idx)?;
                nan_check(it, current, &g)?;
                trace.push(current);
                let t = (it + 1) as i32;
                let (c1, c2) = (1.0 - B1.powi(t), 1.0 - B2.powi(t));
                for k in 0..dim {
                    let gk = scale * g[k];
                    m[k] = B1 * m[k] + (1.0 - B1) * gk;
                    v[k] = B2 * v[k] + (1.0 - B2) * gk * gk;
                    params[k] -= config.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
    Ok(trace)
}

/// Trains from a seeded uniform `[0, 2 pi)` initialization.
pub fn train(
    model: &Model,
    config: &TrainConfig,
    xs: &[Vec<f64>],
    ys: &[u8],
    seed: u64,
) -> Result<TrainRun> {
    check_batch(xs.len(), ys.len())?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: Vec<f64> = (0..model.param_count())
        .map(|_| rng.random_range(0.0..TAU))
        .collect();
    let batch = |idx: &[usize]| -> (Vec<&[f64]>, Vec<u8>) {
        (
            idx.iter().map(|&i| xs[i].as_slice()).collect(),
            idx.iter().map(|&i| ys[i]).collect(),
        )
    };
    let trace = optimize(
        config,
        &mut params,
        xs.len(),
        &mut rng,
        |p, idx| {
            let (bx, by) = batch(idx);
            batch_loss(model, p, &bx, &by, config.loss)
        },
        |p, idx| {
            let (bx, by) = batch(idx);
            gradient(model, p, &bx, &by, config.loss, config.gradient)
        },
    )?;
    Ok(TrainRun {
        config: *config,
        model_hash: model.spec().hash_hex(),
        seed,
        loss_trace: trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        params,
        test_accuracy: None,
    })
}

/// Class 1 when `z <= 0`.
pub fn predict(r: &Readout) -> u8 {
    u8::from(r.z_expectation <= 0.0)
}

pub fn evaluate(model: &Model, params: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> Result<f64> {
    check_batch(xs.len(), ys.len())?;
    let bound = model.bind(params)?;
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        if predict(&bound.forward(x)?) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len() as f64)
}

/// `iteration,loss` lines with a header.
pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}
