//! Full classifier circuits: encoding, convolution/pooling layers, readout.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ansatz::{build_conv, build_pool, AnsatzId, CircuitTemplate};
use crate::encoding::EncodingSpec;
use crate::error::{invalid, QcnnError, Result};
use crate::simulator::{apply_mat4, readout_raw, Mat4, Readout, StateVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Periodic => "periodic",
            Self::Open => "open",
        }
    }
}

impl FromStr for Boundary {
    type Err = QcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "periodic" => Ok(Self::Periodic),
            "open" => Ok(Self::Open),
            other => Err(invalid!("unknown boundary `{other}`")),
        }
    }
}

/// `Shared` reuses one parameter set per layer; `Independent` is the tree
/// classifier with fresh parameters per block and no pooling gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    Shared,
    Independent,
}

impl Sharing {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Shared => "shared",
            Self::Independent => "independent",
        }
    }
}

impl FromStr for Sharing {
    type Err = QcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shared" | "qcnn" => Ok(Self::Shared),
            "independent" | "hqc" => Ok(Self::Independent),
            other => Err(invalid!("unknown weight sharing `{other}`")),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Sharing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoding: EncodingSpec,
    pub ansatz: AnsatzId,
    /// Filter repetitions per layer; one entry per layer.
    pub filters: Vec<usize>,
    pub boundary: Boundary,
    pub pooling_gates: bool,
    pub sharing: Sharing,
}

impl ModelSpec {
    /// Shared-weight network with one filter per layer and periodic boundary.
    pub fn qcnn(encoding: EncodingSpec, ansatz: AnsatzId) -> Self {
        let layers = encoding.n_qubits.max(1).trailing_zeros() as usize;
        Self {
            encoding,
            ansatz,
            filters: vec![1; layers],
            boundary: Boundary::Periodic,
            pooling_gates: ansatz.default_pooling_gates(),
            sharing: Sharing::Shared,
        }
    }

    /// Tree classifier with independent block parameters.
    pub fn hqc(encoding: EncodingSpec, ansatz: AnsatzId) -> Self {
        Self {
            pooling_gates: false,
            sharing: Sharing::Independent,
            ..Self::qcnn(encoding, ansatz)
        }
    }

    pub fn with_filters(mut self, per_layer: usize) -> Self {
        self.filters.iter_mut().for_each(|l| *l = per_layer);
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.encoding.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.filters.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_qubits();
        if n < 2 || !n.is_power_of_two() {
            return Err(QcnnError::Construction(format!(
                "qubit count {n} is not a power of two >= 2"
            )));
        }
        let layers = n.trailing_zeros() as usize;
        if self.filters.len() != layers {
            return Err(QcnnError::Construction(format!(
                "{n} qubits need {layers} filter counts, got {}",
                self.filters.len()
            )));
        }
        if self.filters.contains(&0) {
            return Err(QcnnError::Construction(
                "filter counts must be positive".into(),
            ));
        }
        if self.sharing == Sharing::Independent && self.pooling_gates {
            return Err(QcnnError::Construction(
                "independent-weight trees have no pooling gates".into(),
            ));
        }
        Ok(())
    }

    /// Stable one-line description used for hashing.
    pub fn canonical(&self) -> String {
        let f: Vec<String> = self.filters.iter().map(ToString::to_string).collect();
        format!(
            "encoding={};n={};m={};b={};ansatz={};filters={};boundary={};pool={};sharing={}",
            self.encoding.kind,
            self.encoding.n_qubits,
            self.encoding.block_qubits,
            self.encoding.blocks,
            self.ansatz,
            f.join(","),
            self.boundary,
            self.pooling_gates,
            self.sharing
        )
    }

    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerPlan {
    /// Qubits active at the start of the layer.
    pub active: Vec<usize>,
    pub conv_pairs: Vec<(usize, usize)>,
    /// `(discard, survive)` pairs that receive pooling gates (when enabled).
    pub pool_pairs: Vec<(usize, usize)>,
    pub discarded: Vec<usize>,
    pub survivors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WiringPlan {
    pub n_qubits: usize,
    pub layers: Vec<LayerPlan>,
    pub readout: usize,
}

fn even_pairs(a: &[usize]) -> Vec<(usize, usize)> {
    a.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

fn staggered_pairs(a: &[usize]) -> Vec<(usize, usize)> {
    a[1..].chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

pub fn plan_wiring(spec: &ModelSpec) -> Result<WiringPlan> {
    spec.validate()?;
    let n = spec.n_qubits();
    let window =
        spec.sharing == Sharing::Shared && spec.boundary == Boundary::Open && !spec.pooling_gates;
    let mut active: Vec<usize> = (0..n).collect();
    let mut layers = Vec::with_capacity(spec.n_layers());
    while active.len() > 1 {
        let k = active.len();
        let mut conv_pairs = even_pairs(&active);
        if spec.sharing == Sharing::Shared {
            conv_pairs.extend(staggered_pairs(&active));
            if spec.boundary == Boundary::Periodic && k > 2 {
                conv_pairs.push((active[k - 1], active[0]));
            }
        }
        let (pool_pairs, survivors) = if window {
            // Keep the central half so the next layer stays nearest-neighbour.
            let keep = if k > 2 {
                active[k / 4..3 * k / 4].to_vec()
            } else {
                vec![active[1]]
            };
            (Vec::new(), keep)
        } else {
            let pairs = even_pairs(&active);
            let keep = pairs.iter().map(|p| p.1).collect();
            (
                if spec.pooling_gates {
                    pairs
                } else {
                    Vec::new()
                },
                keep,
            )
        };
        let discarded = active
            .iter()
            .copied()
            .filter(|q| !survivors.contains(q))
            .collect();
        layers.push(LayerPlan {
            active: active.clone(),
            conv_pairs,
            pool_pairs,
            discarded,
            survivors: survivors.clone(),
        });
        active = survivors;
    }
    Ok(WiringPlan {
        n_qubits: n,
        layers,
        readout: active[0],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Conv,
    Pool,
}

/// One two-qubit block application in circuit order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOp {
    pub kind: BlockKind,
    pub layer: usize,
    pub q_a: usize,
    pub q_b: usize,
    /// Index of the block's first parameter in the model vector.
    pub offset: usize,
}

/// A validated spec compiled to an ordered block list.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    plan: WiringPlan,
    conv: CircuitTemplate,
    pool: CircuitTemplate,
    ops: Vec<BlockOp>,
    n_params: usize,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let plan = plan_wiring(&spec)?;
        let conv = build_conv(spec.ansatz);
        let pool = build_pool();
        let mut ops = Vec::new();
        let mut next = 0usize;
        for (layer, lp) in plan.layers.iter().enumerate() {
            for _ in 0..spec.filters[layer] {
                match spec.sharing {
                    Sharing::Shared => {
                        let offset = next;
                        next += conv.param_count();
                        for &(a, b) in &lp.conv_pairs {
                            ops.push(BlockOp {
                                kind: BlockKind::Conv,
                                layer,
                                q_a: a,
                                q_b: b,
                                offset,
                            });
                        }
                    }
                    Sharing::Independent => {
                        for &(a, b) in &lp.conv_pairs {
                            ops.push(BlockOp {
                                kind: BlockKind::Conv,
                                layer,
                                q_a: a,
                                q_b: b,
                                offset: next,
                            });
                            next += conv.param_count();
                        }
                    }
                }
            }
            if !lp.pool_pairs.is_empty() {
                let offset = next;
                next += pool.param_count();
                for &(a, b) in &lp.pool_pairs {
                    ops.push(BlockOp {
                        kind: BlockKind::Pool,
                        layer,
                        q_a: a,
                        q_b: b,
                        offset,
                    });
                }
            }
        }
        Ok(Self {
            spec,
            plan,
            conv,
            pool,
            ops,
            n_params: next,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn plan(&self) -> &WiringPlan {
        &self.plan
    }

    pub fn ops(&self) -> &[BlockOp] {
        &self.ops
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn template(&self, kind: BlockKind) -> &CircuitTemplate {
        match kind {
            BlockKind::Conv => &self.conv,
            BlockKind::Pool => &self.pool,
        }
    }

    /// Parameter slice feeding `op`.
    pub fn op_params<'p>(&self, op: &BlockOp, params: &'p [f64]) -> &'p [f64] {
        &params[op.offset..op.offset + self.template(op.kind).param_count()]
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(invalid!(
                "model takes {} parameters, got {}",
                self.n_params,
                params.len()
            ));
        }
        Ok(())
    }

    /// Binds every block once so a batch can reuse the matrices.
    pub fn bind(&self, params: &[f64]) -> Result<BoundModel<'_>> {
        self.check_params(params)?;
        let mats = self
            .ops
            .iter()
            .map(|op| {
                self.template(op.kind)
                    .compose(self.op_params(op, params), None)
            })
            .collect();
        Ok(BoundModel { model: self, mats })
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Readout> {
        self.bind(params)?.forward(x)
    }

    /// Parameters that change some block's local output for random parameters
    /// and random two-qubit inputs. A block's local output traces out each of its
    /// qubits that no later block touches, except the readout qubit.
    pub fn effective_params(&self, seed: u64, draws: usize) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut effective = vec![false; self.n_params];
        let h = 1e-5;
        let keep = |q: usize, i: usize| {
            q == self.plan.readout || self.ops[i + 1..].iter().any(|o| o.q_a == q || o.q_b == q)
        };
        for _ in 0..draws {
            let params: Vec<f64> = (0..self.n_params)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            for (i, op) in self.ops.iter().enumerate() {
                let template = self.template(op.kind);
                let local = self.op_params(op, &params).to_vec();
                let mut psi: Vec<C64> = (0..4)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                psi.iter_mut().for_each(|a| *a /= norm);
                let kept = (keep(op.q_a, i), keep(op.q_b, i));
                for slot in 0..local.len() {
                    if effective[op.offset + slot] {
                        continue;
                    }
                    let mut up = local.clone();
                    up[slot] += h;
                    let mut dn = local.clone();
                    dn[slot] -= h;
                    let ru = local_output(&template.compose(&up, None), &psi, kept);
                    let rd = local_output(&template.compose(&dn, None), &psi, kept);
                    let diff = ru
                        .iter()
                        .zip(&rd)
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max)
                        / (2.0 * h);
                    if diff > 1e-7 {
                        effective[op.offset + slot] = true;
                    }
                }
            }
        }
        effective
    }

    pub fn effective_param_count(&self, seed: u64, draws: usize) -> usize {
        self.effective_params(seed, draws)
            .iter()
            .filter(|e| **e)
            .count()
    }
}

/// Density matrix of `u |psi>` restricted to the kept qubits of the pair, row-major.
fn local_output(u: &Mat4, psi: &[C64], kept: (bool, bool)) -> Vec<C64> {
    let out: Vec<C64> = (0..4)
        .map(|r| (0..4).map(|c| u[r][c] * psi[c]).sum())
        .collect();
    let rho = |i: usize, j: usize| out[i] * out[j].conj();
    match kept {
        (true, true) => (0..16).map(|k| rho(k / 4, k % 4)).collect(),
        (false, true) => (0..4)
            .map(|k| rho(k / 2, k % 2) + rho(2 + k / 2, 2 + k % 2))
            .collect(),
        (true, false) => (0..4)
            .map(|k| rho(2 * (k / 2), 2 * (k % 2)) + rho(2 * (k / 2) + 1, 2 * (k % 2) + 1))
            .collect(),
        (false, false) => Vec::new(),
    }
}

/// A model with all block matrices bound for a fixed parameter vector.
pub struct BoundModel<'m> {
    model: &'m Model,
    mats: Vec<Mat4>,
}

impl BoundModel<'_> {
    pub fn model(&self) -> &Model {
        self.model
    }

    pub(crate) fn evolve(&self, amps: &mut [C64]) {
        let n = self.model.spec.n_qubits();
        for (op, m) in self.model.ops.iter().zip(&self.mats) {
            apply_mat4(amps, n, m, op.q_a, op.q_b);
        }
    }

    /// Encoded and evolved amplitudes for `x`.
    pub fn final_amplitudes(&self, x: &[f64]) -> Result<Vec<C64>> {
        let mut amps = self.model.spec.encoding.encode_amplitudes(x)?;
        self.evolve(&mut amps);
        Ok(amps)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Readout> {
        let amps = self.final_amplitudes(x)?;
        Ok(readout_raw(
            &amps,
            self.model.spec.n_qubits(),
            self.model.plan.readout,
        ))
    }

    /// Runs the circuit on an arbitrary input state.
    pub fn forward_state(&self, state: &StateVector) -> Result<Readout> {
        let n = self.model.spec.n_qubits();
        if state.n_qubits() != n {
            return Err(invalid!(
                "model acts on {n} qubits, state has {}",
                state.n_qubits()
            ));
        }
        let mut amps = state.amplitudes().to_vec();
        self.evolve(&mut amps);
        Ok(readout_raw(&amps, n, self.model.plan.readout))
    }
}

pub fn count_params(spec: &ModelSpec) -> Result<usize> {
    Ok(Model::new(spec.clone())?.param_count())
}

pub fn forward(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Result<Readout> {
    Model::new(spec.clone())?.forward(params, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingKind;
    use crate::simulator::gates;
    use std::f64::consts::TAU;

    fn enc(kind: EncodingKind, n: usize) -> EncodingSpec {
        EncodingSpec::new(kind, n).unwrap()
    }

    fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    #[test]
    fn periodic_and_open_wiring() {
        let spec = ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), AnsatzId::C1);
        let plan = plan_wiring(&spec).unwrap();
        assert!(plan.layers[0].conv_pairs.contains(&(7, 0)));
        assert_eq!(plan.layers[0].survivors, vec![1, 3, 5, 7]);
        assert_eq!(plan.layers[1].survivors, vec![3, 7]);
        assert_eq!(plan.readout, 7);
        assert_eq!(plan.layers[2].conv_pairs, vec![(3, 7)]);
        let open = plan_wiring(&spec.clone().with_boundary(Boundary::Open)).unwrap();
        assert!(!open.layers[0].conv_pairs.contains(&(7, 0)));
        assert_eq!(open.readout, 7);
    }

    #[test]
    fn open_trace_only_is_nearest_neighbour() {
        let spec = ModelSpec::qcnn(enc(EncodingKind::Amplitude, 8), AnsatzId::C9b)
            .with_boundary(Boundary::Open);
        let plan = plan_wiring(&spec).unwrap();
        for layer in &plan.layers {
            for &(a, b) in layer.conv_pairs.iter().chain(&layer.pool_pairs) {
                assert_eq!(a.abs_diff(b), 1, "{a},{b}");
            }
        }
        assert_eq!(plan.layers[0].survivors, vec![2, 3, 4, 5]);
        assert_eq!(plan.layers[1].survivors, vec![3, 4]);
        assert_eq!(plan.readout, 4);
    }

    #[test]
    fn discarded_qubits_are_never_touched_again() {
        for ansatz in AnsatzId::ALL {
            for boundary in [Boundary::Periodic, Boundary::Open] {
                let model = Model::new(
                    ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), ansatz).with_boundary(boundary),
                )
                .unwrap();
                let mut gone = [false; 8];
                let mut layer = 0;
                for op in model.ops() {
                    while op.layer > layer {
                        for &q in &model.plan().layers[layer].discarded {
                            gone[q] = true;
                        }
                        layer += 1;
                    }
                    assert!(!gone[op.q_a] && !gone[op.q_b]);
                }
                let survivors = (0..8)
                    .filter(|q| !model.plan().layers.iter().any(|l| l.discarded.contains(q)))
                    .collect::<Vec<_>>();
                assert_eq!(survivors, vec![model.plan().readout]);
            }
        }
    }

    #[test]
    fn shared_parameter_totals() {
        let expected = [12, 12, 18, 24, 24, 24, 36, 36, 51, 45];
        for (id, n) in AnsatzId::ALL.iter().zip(expected) {
            let spec = ModelSpec::qcnn(enc(EncodingKind::Amplitude, 8), *id);
            assert_eq!(count_params(&spec).unwrap(), n, "{id}");
        }
        let c3 = ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), AnsatzId::C3).with_filters(2);
        assert_eq!(count_params(&c3).unwrap(), 30);
    }

    #[test]
    fn hqc_totals_and_effective_counts() {
        // c7: the first Rz on the discarded qubit commutes with both CRz gates.
        let expected = [14, 7, 28, 42, 42, 35, 49, 56, 84];
        for (id, eff) in AnsatzId::ALL[..9].iter().zip(expected) {
            let model = Model::new(ModelSpec::hqc(enc(EncodingKind::Amplitude, 8), *id)).unwrap();
            assert_eq!(model.param_count(), 7 * id.conv_param_count());
            assert_eq!(model.effective_param_count(1, 2), eff, "{id}");
        }
    }

    #[test]
    fn conv_blocks_share_slots_within_a_layer() {
        let model = Model::new(ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), AnsatzId::C5)).unwrap();
        for layer in 0..3 {
            let offsets: Vec<usize> = model
                .ops()
                .iter()
                .filter(|o| o.layer == layer && o.kind == BlockKind::Conv)
                .map(|o| o.offset)
                .collect();
            assert!(offsets.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn zero_params_are_identity() {
        let model = Model::new(ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), AnsatzId::C4)).unwrap();
        let r = model
            .forward(&vec![0.0; model.param_count()], &[0.0; 8])
            .unwrap();
        assert!(
            (r.p0 - 1.0).abs() < 1e-12
                && r.p1.abs() < 1e-12
                && (r.z_expectation - 1.0).abs() < 1e-12
        );
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for id in AnsatzId::ALL {
            for kind in EncodingKind::ALL {
                let model = Model::new(ModelSpec::qcnn(enc(kind, 8), id)).unwrap();
                let p = random_vec(model.param_count(), 0.0, TAU, &mut rng);
                let x = random_vec(model.spec().encoding.capacity(), 0.01, 1.5, &mut rng);
                let r = model.forward(&p, &x).unwrap();
                assert!((r.p0 + r.p1 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn length_and_construction_errors() {
        let model = Model::new(ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), AnsatzId::C1)).unwrap();
        assert!(model.forward(&[0.0; 11], &[0.0; 8]).is_err());
        let bad = ModelSpec::qcnn(
            EncodingSpec::new(EncodingKind::Qubit, 6).unwrap(),
            AnsatzId::C1,
        );
        assert!(matches!(Model::new(bad), Err(QcnnError::Construction(_))));
    }

    #[test]
    fn discarded_qubits_do_not_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model =
            Model::new(ModelSpec::qcnn(enc(EncodingKind::Dense, 8), AnsatzId::C9a)).unwrap();
        let p = random_vec(model.param_count(), 0.0, TAU, &mut rng);
        let x = random_vec(16, 0.0, 3.0, &mut rng);
        let bound = model.bind(&p).unwrap();
        let reference = bound.forward(&x).unwrap();
        let mut amps = model.spec().encoding.encode_amplitudes(&x).unwrap();
        let kick = crate::ansatz::build_conv(AnsatzId::C9a)
            .compose(&random_vec(15, 0.0, TAU, &mut rng), None);
        let first_layer2 = model.ops().iter().position(|o| o.layer == 1).unwrap();
        for (i, (op, m)) in model.ops().iter().zip(&bound.mats).enumerate() {
            if i == first_layer2 {
                // Layer 1 discarded {0, 2, 4, 6}.
                apply_mat4(&mut amps, 8, &kick, 0, 2);
                apply_mat4(
                    &mut amps,
                    8,
                    &gates::embed_1q(&gates::hadamard_matrix(), true),
                    4,
                    6,
                );
            }
            apply_mat4(&mut amps, 8, m, op.q_a, op.q_b);
        }
        let r = readout_raw(&amps, 8, model.plan().readout);
        assert!((r.z_expectation - reference.z_expectation).abs() < 1e-12);
    }

    #[test]
    fn filter_sweep_grows_linearly() {
        for l in 1..=3 {
            let spec = ModelSpec::qcnn(enc(EncodingKind::Dense, 8), AnsatzId::C9a).with_filters(l);
            assert_eq!(spec.filters, vec![l; 3]);
            assert_eq!(count_params(&spec).unwrap(), 3 * (15 * l + 2));
        }
    }

    #[test]
    fn spec_hash_is_stable_and_sensitive() {
        let a = ModelSpec::qcnn(enc(EncodingKind::Qubit, 8), AnsatzId::C3);
        assert_eq!(a.hash_hex(), a.clone().hash_hex());
        assert_eq!(a.hash_hex().len(), 64);
        assert_ne!(
            a.hash_hex(),
            a.clone().with_boundary(Boundary::Open).hash_hex()
        );
    }
}
