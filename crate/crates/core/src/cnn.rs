//! Tiny 1-D convolutional baselines with fixed parameter budgets.
//!
//! Architecture: conv(k1, 1 -> c1) -> ReLU -> maxpool 2 -> conv(k2, c1 -> c2) -> ReLU
//! -> maxpool 2 -> dense(c2 * len -> 1) -> sigmoid. Convolutions use valid padding
//! and pooling drops a trailing odd element.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, QcnnError, Result};
use crate::training::{check_batch, optimize, Loss, TrainConfig, TrainRun, PROB_EPS};

/// Parameter budgets accepted by [`CnnSpec`].
pub const CNN_BUDGETS: [(usize, usize); 4] = [(8, 26), (8, 44), (16, 34), (16, 56)];

const MAX_CHANNELS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CnnPlan {
    pub input_len: usize,
    pub k1: usize,
    pub c1: usize,
    pub k2: usize,
    pub c2: usize,
}

/// Output of [`enumerate_plan`] for every budget, kept as data so the census is auditable.
pub const FROZEN_PLANS: [CnnPlan; 4] = [
    CnnPlan {
        input_len: 8,
        k1: 2,
        c1: 3,
        k2: 2,
        c2: 2,
    },
    CnnPlan {
        input_len: 8,
        k1: 2,
        c1: 1,
        k2: 2,
        c2: 10,
    },
    CnnPlan {
        input_len: 16,
        k1: 4,
        c1: 1,
        k2: 5,
        c2: 4,
    },
    CnnPlan {
        input_len: 16,
        k1: 5,
        c1: 1,
        k2: 5,
        c2: 7,
    },
];

impl CnnPlan {
    /// Lengths after conv1, pool1, conv2, pool2; `None` if any stage would be empty.
    pub fn lengths(&self) -> Option<[usize; 4]> {
        let l1 = (self.input_len + 1).checked_sub(self.k1)?;
        let p1 = l1 / 2;
        let l2 = (p1 + 1).checked_sub(self.k2)?;
        let p2 = l2 / 2;
        (self.k1 >= 1 && self.k2 >= 1 && p1 >= 1 && p2 >= 1).then_some([l1, p1, l2, p2])
    }

    pub fn is_valid(&self) -> bool {
        self.c1 >= 1 && self.c2 >= 1 && self.lengths().is_some()
    }

    pub fn param_count(&self) -> usize {
        let p2 = self.lengths().map_or(0, |l| l[3]);
        self.c1 * self.k1 + self.c1 + self.c2 * self.c1 * self.k2 + self.c2 + self.c2 * p2 + 1
    }

    /// Flat offsets: `w1 [c1][k1]`, `b1`, `w2 [c2][c1][k2]`, `b2`, `wf [c2][p2]`, `bf`.
    fn offsets(&self) -> [usize; 6] {
        let p2 = self.lengths().map_or(0, |l| l[3]);
        let w1 = 0;
        let b1 = w1 + self.c1 * self.k1;
        let w2 = b1 + self.c1;
        let b2 = w2 + self.c2 * self.c1 * self.k2;
        let wf = b2 + self.c2;
        let bf = wf + self.c2 * p2;
        [w1, b1, w2, b2, wf, bf]
    }
}

impl fmt::Display for CnnPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "in{} conv{}x{} pool2 conv{}x{} pool2 fc ({} params)",
            self.input_len,
            self.k1,
            self.c1,
            self.k2,
            self.c2,
            self.param_count()
        )
    }
}

/// First plan hitting `target` in `(c1, c2, k1, k2)` order, kernels of width 2 or more
/// before width-1 kernels are allowed.
pub fn enumerate_plan(input_len: usize, target: usize) -> Result<CnnPlan> {
    for min_kernel in [2, 1] {
        for c1 in 1..=MAX_CHANNELS {
            for c2 in 1..=MAX_CHANNELS {
                for k1 in min_kernel..=input_len {
                    for k2 in min_kernel..=input_len {
                        let plan = CnnPlan {
                            input_len,
                            k1,
                            c1,
                            k2,
                            c2,
                        };
                        if plan.is_valid() && plan.param_count() == target {
                            return Ok(plan);
                        }
                    }
                }
            }
        }
    }
    Err(QcnnError::Construction(format!(
        "no plan with input {input_len} has {target} parameters; count = c1*k1 + c1 + c2*c1*k2 + c2 + c2*len + 1 \
         over kernels 1..={input_len} and channels 1..={MAX_CHANNELS}"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CnnSpec {
    pub input_len: usize,
    pub target_params: usize,
}

impl CnnSpec {
    pub fn new(input_len: usize, target_params: usize) -> Result<Self> {
        if !CNN_BUDGETS.contains(&(input_len, target_params)) {
            return Err(QcnnError::Construction(format!(
                "unsupported CNN budget ({input_len} inputs, {target_params} params); expected one of {CNN_BUDGETS:?}"
            )));
        }
        Ok(Self {
            input_len,
            target_params,
        })
    }

    pub fn plan(&self) -> Result<CnnPlan> {
        FROZEN_PLANS
            .iter()
            .copied()
            .find(|p| p.input_len == self.input_len && p.param_count() == self.target_params)
            .map_or_else(|| enumerate_plan(self.input_len, self.target_params), Ok)
    }

    pub fn hash_hex(&self) -> String {
        let canon = format!("cnn;in={};params={}", self.input_len, self.target_params);
        Sha256::digest(canon.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Activations kept for the backward pass.
struct Tape {
    a1: Vec<f64>,
    arg1: Vec<usize>,
    m1: Vec<f64>,
    a2: Vec<f64>,
    arg2: Vec<usize>,
    m2: Vec<f64>,
    p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    plan: CnnPlan,
}

fn maxpool(a: &[f64], ch: usize, len: usize, out_len: usize) -> (Vec<f64>, Vec<usize>) {
    let mut m = Vec::with_capacity(ch * out_len);
    let mut arg = Vec::with_capacity(ch * out_len);
    for c in 0..ch {
        for t in 0..out_len {
            let i = c * len + 2 * t;
            let j = if a[i + 1] > a[i] { i + 1 } else { i };
            m.push(a[j]);
            arg.push(j);
        }
    }
    (m, arg)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Cnn {
    pub fn new(spec: &CnnSpec) -> Result<Self> {
        Ok(Self { plan: spec.plan()? })
    }

    pub fn from_plan(plan: CnnPlan) -> Result<Self> {
        if !plan.is_valid() {
            return Err(QcnnError::Construction(format!(
                "degenerate CNN plan {plan:?}"
            )));
        }
        Ok(Self { plan })
    }

    pub fn plan(&self) -> &CnnPlan {
        &self.plan
    }

    pub fn param_count(&self) -> usize {
        self.plan.param_count()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let CnnPlan { k1, c1, k2, c2, .. } = self.plan;
        let p2 = self.plan.lengths().unwrap()[3];
        let [w1, b1, w2, b2, wf, bf] = self.plan.offsets();
        let mut params = vec![0.0; self.param_count()];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut params[range] {
                *v = rng.random_range(-limit..limit);
            }
        };
        fill(w1..b1, k1, k1 * c1);
        fill(w2..b2, k2 * c1, k2 * c2);
        fill(wf..bf, c2 * p2, 1);
        params
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(invalid!(
                "CNN expects {} parameters, got {}",
                self.param_count(),
                params.len()
            ));
        }
        if x.len() != self.plan.input_len {
            return Err(invalid!(
                "CNN expects {} inputs, got {}",
                self.plan.input_len,
                x.len()
            ));
        }
        Ok(())
    }

    fn run(&self, params: &[f64], x: &[f64]) -> Tape {
        let CnnPlan { k1, c1, k2, c2, .. } = self.plan;
        let [l1, p1, l2, p2] = self.plan.lengths().unwrap();
        let [w1, b1, w2, b2, wf, bf] = self.plan.offsets();
        let mut a1 = vec![0.0; c1 * l1];
        for c in 0..c1 {
            for t in 0..l1 {
                let s: f64 = (0..k1).map(|j| params[w1 + c * k1 + j] * x[t + j]).sum();
                a1[c * l1 + t] = (params[b1 + c] + s).max(0.0);
            }
        }
        let (m1, arg1) = maxpool(&a1, c1, l1, p1);
        let mut a2 = vec![0.0; c2 * l2];
        for d in 0..c2 {
            for t in 0..l2 {
                let mut s = params[b2 + d];
                for c in 0..c1 {
                    for j in 0..k2 {
                        s += params[w2 + (d * c1 + c) * k2 + j] * m1[c * p1 + t + j];
                    }
                }
                a2[d * l2 + t] = s.max(0.0);
            }
        }
        let (m2, arg2) = maxpool(&a2, c2, l2, p2);
        let z = params[bf]
            + m2.iter()
                .enumerate()
                .map(|(i, v)| params[wf + i] * v)
                .sum::<f64>();
        Tape {
            a1,
            arg1,
            m1,
            a2,
            arg2,
            m2,
            p: sigmoid(z),
        }
    }

    /// Probability of class 1.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        self.check(params, x)?;
        Ok(self.run(params, x).p)
    }

    /// Adds `dz * d z / d params` into `grad`, where `z` is the pre-sigmoid output.
    fn backward(&self, params: &[f64], x: &[f64], tape: &Tape, dz: f64, grad: &mut [f64]) {
        let CnnPlan { k1, c1, k2, c2, .. } = self.plan;
        let [l1, p1, l2, _] = self.plan.lengths().unwrap();
        let [w1, b1, w2, b2, wf, bf] = self.plan.offsets();
        grad[bf] += dz;
        let mut da2 = vec![0.0; c2 * l2];
        for (i, (&m, &j)) in tape.m2.iter().zip(&tape.arg2).enumerate() {
            grad[wf + i] += dz * m;
            if tape.a2[j] > 0.0 {
                da2[j] += dz * params[wf + i];
            }
        }
        let mut dm1 = vec![0.0; c1 * p1];
        for d in 0..c2 {
            for t in 0..l2 {
                let g = da2[d * l2 + t];
                if g == 0.0 {
                    continue;
                }
                grad[b2 + d] += g;
                for c in 0..c1 {
                    for j in 0..k2 {
                        let w = w2 + (d * c1 + c) * k2 + j;
                        grad[w] += g * tape.m1[c * p1 + t + j];
                        dm1[c * p1 + t + j] += g * params[w];
                    }
                }
            }
        }
        let mut da1 = vec![0.0; c1 * l1];
        for (&g, &j) in dm1.iter().zip(&tape.arg1) {
            if tape.a1[j] > 0.0 {
                da1[j] += g;
            }
        }
        for c in 0..c1 {
            for t in 0..l1 {
                let g = da1[c * l1 + t];
                grad[b1 + c] += g;
                for j in 0..k1 {
                    grad[w1 + c * k1 + j] += g * x[t + j];
                }
            }
        }
    }

    /// Mean batch loss on the class-1 probability: cross-entropy, or `(p - y)^2` for MSE.
    pub fn batch_loss(&self, params: &[f64], xs: &[&[f64]], ys: &[u8], loss: Loss) -> Result<f64> {
        check_batch(xs.len(), ys.len())?;
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.check(params, x)?;
            total += sample_loss(loss, self.run(params, x).p, y);
        }
        Ok(total / xs.len() as f64)
    }

    /// Mean batch loss and its backpropagated gradient.
    pub fn gradient(
        &self,
        params: &[f64],
        xs: &[&[f64]],
        ys: &[u8],
        loss: Loss,
    ) -> Result<(f64, Vec<f64>)> {
        check_batch(xs.len(), ys.len())?;
        let n = xs.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.check(params, x)?;
            let tape = self.run(params, x);
            total += sample_loss(loss, tape.p, y);
            let t = f64::from(y);
            let dz = match loss {
                Loss::CrossEntropy => tape.p - t,
                Loss::Mse => 2.0 * (tape.p - t) * tape.p * (1.0 - tape.p),
            };
            self.backward(params, x, &tape, dz / n, &mut grad);
        }
        Ok((total / n, grad))
    }
}

fn sample_loss(loss: Loss, p: f64, y: u8) -> f64 {
    let t = f64::from(y);
    match loss {
        Loss::Mse => (p - t).powi(2),
        Loss::CrossEntropy => {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        }
    }
}

/// Trains from a seeded Glorot initialization; `config.gradient` is ignored (always backprop).
pub fn train_cnn(
    spec: &CnnSpec,
    config: &TrainConfig,
    xs: &[Vec<f64>],
    ys: &[u8],
    seed: u64,
) -> Result<TrainRun> {
    check_batch(xs.len(), ys.len())?;
    let start = Instant::now();
    let net = Cnn::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = net.init_params(&mut rng);
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
            net.batch_loss(p, &bx, &by, config.loss)
        },
        |p, idx| {
            let (bx, by) = batch(idx);
            net.gradient(p, &bx, &by, config.loss)
        },
    )?;
    Ok(TrainRun {
        config: *config,
        model_hash: spec.hash_hex(),
        seed,
        loss_trace: trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        params,
        test_accuracy: None,
    })
}

/// Class 1 when `p >= 0.5`.
pub fn evaluate_cnn(spec: &CnnSpec, params: &[f64], xs: &[Vec<f64>], ys: &[u8]) -> Result<f64> {
    check_batch(xs.len(), ys.len())?;
    let net = Cnn::new(spec)?;
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        if u8::from(net.forward(params, x)? >= 0.5) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len() as f64)
}
