//! Two-qubit circuit templates for the convolution filters and the pooling block.
//!
//! A template is an ordered gate list on a qubit pair `(A, B)`. In a pooling
//! step, or when a tree classifier drops a qubit, `A` is the qubit that is
//! discarded afterwards and `B` survives.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simulator::gates::{self, Control};
use crate::simulator::{mat4_identity, mat4_mul, GateMatrix, Mat2, Mat4, C64, ZERO};

/// Convolution ansatz identifiers. `C9a` and `C9b` share the SU(4) filter and
/// differ only in whether pooling applies gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9a,
    C9b,
}

impl AnsatzId {
    pub const ALL: [AnsatzId; 10] = [
        Self::C1,
        Self::C2,
        Self::C3,
        Self::C4,
        Self::C5,
        Self::C6,
        Self::C7,
        Self::C8,
        Self::C9a,
        Self::C9b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::C1 => "c1",
            Self::C2 => "c2",
            Self::C3 => "c3",
            Self::C4 => "c4",
            Self::C5 => "c5",
            Self::C6 => "c6",
            Self::C7 => "c7",
            Self::C8 => "c8",
            Self::C9a => "c9a",
            Self::C9b => "c9b",
        }
    }

    /// Whether the pooling step carries parameterized gates by default.
    pub fn default_pooling_gates(self) -> bool {
        self != Self::C9b
    }

    /// Parameters of one convolution block.
    pub fn conv_param_count(self) -> usize {
        build_conv(self).param_count()
    }
}

impl fmt::Display for AnsatzId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnsatzId {
    type Err = crate::QcnnError;

    fn from_str(s: &str) -> Result<Self> {
        let id = match s.trim().to_ascii_lowercase().as_str() {
            "c1" | "1" => Self::C1,
            "c2" | "2" => Self::C2,
            "c3" | "3" => Self::C3,
            "c4" | "4" => Self::C4,
            "c5" | "5" => Self::C5,
            "c6" | "6" => Self::C6,
            "c7" | "7" => Self::C7,
            "c8" | "8" => Self::C8,
            "c9a" | "9a" | "c9" | "9" => Self::C9a,
            "c9b" | "9b" => Self::C9b,
            other => return Err(invalid!("unknown ansatz id `{other}`")),
        };
        Ok(id)
    }
}

/// Position inside the two-qubit block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    A,
    B,
}

impl Role {
    fn is_first(self) -> bool {
        self == Role::A
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    H,
    X,
    /// CNOT with the given control role.
    Cnot,
    Cz,
    CRx(Control),
    CRz(Control),
}

impl GateKind {
    fn is_rotation(self) -> bool {
        matches!(
            self,
            Self::Rx | Self::Ry | Self::Rz | Self::CRx(_) | Self::CRz(_)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    None,
    Fixed(f64),
    Slot(usize),
}

/// Gradient recipe for a parameterized gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftRule {
    /// Generator spectrum `{+-1/2}`: `(f(t + pi/2) - f(t - pi/2)) / 2`.
    TwoTerm,
    /// Generator spectrum `{0, +-1/2}` (controlled rotations).
    FourTerm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    /// Target qubit, or the control for two-qubit gates.
    pub role: Role,
    pub angle: Angle,
}

impl GateSpec {
    pub fn shift_rule(&self) -> Option<ShiftRule> {
        match (self.kind, self.angle) {
            (_, Angle::Slot(_)) if matches!(self.kind, GateKind::CRx(_) | GateKind::CRz(_)) => {
                Some(ShiftRule::FourTerm)
            }
            (_, Angle::Slot(_)) => Some(ShiftRule::TwoTerm),
            _ => None,
        }
    }

    fn theta(&self, params: &[f64]) -> f64 {
        match self.angle {
            Angle::None => 0.0,
            Angle::Fixed(t) => t,
            Angle::Slot(k) => params[k],
        }
    }

    fn rotation(kind: GateKind, theta: f64) -> Mat2 {
        match kind {
            GateKind::Rx | GateKind::CRx(_) => gates::rx_matrix(theta),
            GateKind::Ry => gates::ry_matrix(theta),
            GateKind::Rz | GateKind::CRz(_) => gates::rz_matrix(theta),
            GateKind::H => gates::hadamard_matrix(),
            GateKind::X | GateKind::Cnot => gates::pauli_x_matrix(),
            GateKind::Cz => [[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(-1.0, 0.0)]],
        }
    }

    /// Pauli generator `sigma` with `R(t) = exp(-i t sigma / 2)`.
    fn generator(kind: GateKind) -> Mat2 {
        let i = C64::new(0.0, 1.0);
        let one = C64::new(1.0, 0.0);
        match kind {
            GateKind::Rx | GateKind::CRx(_) => [[ZERO, one], [one, ZERO]],
            GateKind::Ry => [[ZERO, -i], [i, ZERO]],
            GateKind::Rz | GateKind::CRz(_) => [[one, ZERO], [ZERO, -one]],
            _ => unreachable!("fixed gates have no generator"),
        }
    }

    /// 4x4 matrix of this gate at angle `theta`.
    pub fn matrix_at(&self, theta: f64) -> Mat4 {
        let first = self.role.is_first();
        match self.kind {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::H | GateKind::X => {
                gates::embed_1q(&Self::rotation(self.kind, theta), first)
            }
            GateKind::Cnot | GateKind::Cz => {
                gates::controlled_matrix(&Self::rotation(self.kind, theta), Control::Filled, first)
            }
            GateKind::CRx(c) | GateKind::CRz(c) => {
                gates::controlled_matrix(&Self::rotation(self.kind, theta), c, first)
            }
        }
    }

    /// Derivative of [`Self::matrix_at`] with respect to `theta`.
    fn derivative_at(&self, theta: f64) -> Mat4 {
        let sigma = Self::generator(self.kind);
        let r = Self::rotation(self.kind, theta);
        let half = C64::new(0.0, -0.5);
        let mut d: Mat2 = [[ZERO; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                d[a][b] = half * (sigma[a][0] * r[0][b] + sigma[a][1] * r[1][b]);
            }
        }
        let first = self.role.is_first();
        match self.kind {
            GateKind::CRx(c) | GateKind::CRz(c) => {
                // Only the active control subspace depends on theta.
                let active = match c {
                    Control::Filled => 1,
                    Control::Open => 0,
                };
                let mut out = [[ZERO; 4]; 4];
                for row in 0..4 {
                    for col in 0..4 {
                        let (rc, rt, cc, ct) = if first {
                            (row >> 1, row & 1, col >> 1, col & 1)
                        } else {
                            (row & 1, row >> 1, col & 1, col >> 1)
                        };
                        if rc == active && cc == active {
                            out[row][col] = d[rt][ct];
                        }
                    }
                }
                out
            }
            _ => gates::embed_1q(&d, first),
        }
    }
}

/// Ordered gate list on a qubit pair with symbolic parameter slots.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitTemplate {
    name: &'static str,
    gates: Vec<GateSpec>,
    param_count: usize,
}

impl CircuitTemplate {
    fn new(name: &'static str, gates: Vec<GateSpec>) -> Self {
        let mut slots: Vec<usize> = gates
            .iter()
            .filter_map(|g| match g.angle {
                Angle::Slot(k) => Some(k),
                _ => None,
            })
            .collect();
        slots.sort_unstable();
        slots.dedup();
        debug_assert!(slots.iter().enumerate().all(|(i, &k)| i == k));
        Self {
            name,
            gates,
            param_count: slots.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn gates(&self) -> &[GateSpec] {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    fn check_len(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(invalid!(
                "template {} takes {} parameters, got {}",
                self.name,
                self.param_count,
                params.len()
            ));
        }
        Ok(())
    }

    /// Composes the template into a 4x4 unitary (gates applied in list order).
    pub fn bind(&self, params: &[f64]) -> Result<GateMatrix> {
        self.check_len(params)?;
        GateMatrix::two_qubit(self.compose(params, None))
    }

    pub(crate) fn compose(&self, params: &[f64], shift: Option<(usize, f64)>) -> Mat4 {
        let mut acc = mat4_identity();
        for (i, g) in self.gates.iter().enumerate() {
            let mut theta = g.theta(params);
            if let Some((j, delta)) = shift {
                if i == j {
                    theta += delta;
                }
            }
            acc = mat4_mul(&g.matrix_at(theta), &acc);
        }
        acc
    }

    /// The bound matrix together with `d(matrix)/d(theta)` for every
    /// parameterized gate occurrence, tagged with its local slot.
    pub(crate) fn with_derivatives(&self, params: &[f64]) -> (Mat4, Vec<(usize, Mat4)>) {
        let mats: Vec<Mat4> = self
            .gates
            .iter()
            .map(|g| g.matrix_at(g.theta(params)))
            .collect();
        let m = mats.len();
        // prefix[k] = G_{k-1} ... G_0
        let mut prefix = Vec::with_capacity(m + 1);
        prefix.push(mat4_identity());
        for g in &mats {
            let next = mat4_mul(g, prefix.last().unwrap());
            prefix.push(next);
        }
        // suffix[k] = G_{m-1} ... G_{k+1}
        let mut suffix = vec![mat4_identity(); m];
        for k in (0..m.saturating_sub(1)).rev() {
            suffix[k] = mat4_mul(&suffix[k + 1], &mats[k + 1]);
        }
        let mut derivs = Vec::new();
        for (k, g) in self.gates.iter().enumerate() {
            if let Angle::Slot(slot) = g.angle {
                let d = g.derivative_at(g.theta(params));
                derivs.push((slot, mat4_mul(&suffix[k], &mat4_mul(&d, &prefix[k]))));
            }
        }
        (prefix[m], derivs)
    }
}

fn one(kind: GateKind, role: Role, slot: usize) -> GateSpec {
    GateSpec {
        kind,
        role,
        angle: Angle::Slot(slot),
    }
}

fn fixed(kind: GateKind, role: Role) -> GateSpec {
    GateSpec {
        kind,
        role,
        angle: Angle::None,
    }
}

/// `U3(theta, phi, lambda) = Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lambda)`
/// with slots `(first, first + 1, first + 2)` for `(theta, phi, lambda)`.
fn u3(role: Role, first: usize) -> [GateSpec; 5] {
    [
        one(GateKind::Rz, role, first + 2),
        GateSpec {
            kind: GateKind::Rx,
            role,
            angle: Angle::Fixed(FRAC_PI_2),
        },
        one(GateKind::Rz, role, first),
        GateSpec {
            kind: GateKind::Rx,
            role,
            angle: Angle::Fixed(-FRAC_PI_2),
        },
        one(GateKind::Rz, role, first + 1),
    ]
}

/// Convolution filter template for `id`.
pub fn build_conv(id: AnsatzId) -> CircuitTemplate {
    use GateKind::*;
    use Role::{A, B};
    match id {
        // Tree-tensor-network block.
        AnsatzId::C1 => {
            CircuitTemplate::new("c1", vec![one(Ry, A, 0), one(Ry, B, 1), fixed(Cnot, A)])
        }
        AnsatzId::C2 => CircuitTemplate::new(
            "c2",
            vec![
                fixed(H, A),
                fixed(H, B),
                fixed(Cz, A),
                one(Rx, A, 0),
                one(Rx, B, 1),
            ],
        ),
        AnsatzId::C3 => CircuitTemplate::new(
            "c3",
            vec![
                one(Ry, A, 0),
                one(Ry, B, 1),
                fixed(Cnot, B),
                one(Ry, A, 2),
                one(Ry, B, 3),
                fixed(Cnot, A),
            ],
        ),
        AnsatzId::C4 | AnsatzId::C5 => {
            let (name, ctrl) = if id == AnsatzId::C4 {
                ("c4", CRz(Control::Filled))
            } else {
                ("c5", CRx(Control::Filled))
            };
            CircuitTemplate::new(
                name,
                vec![
                    one(Ry, A, 0),
                    one(Ry, B, 1),
                    one(ctrl, B, 2),
                    one(Ry, A, 3),
                    one(Ry, B, 4),
                    one(ctrl, A, 5),
                ],
            )
        }
        // Real orthogonal block: RY layers interleaved with CNOTs.
        AnsatzId::C6 => CircuitTemplate::new(
            "c6",
            vec![
                one(Ry, A, 0),
                one(Ry, B, 1),
                fixed(Cnot, A),
                one(Ry, A, 2),
                one(Ry, B, 3),
                fixed(Cnot, A),
                one(Ry, A, 4),
                one(Ry, B, 5),
            ],
        ),
        AnsatzId::C7 | AnsatzId::C8 => {
            let (name, ctrl) = if id == AnsatzId::C7 {
                ("c7", CRz(Control::Filled))
            } else {
                ("c8", CRx(Control::Filled))
            };
            CircuitTemplate::new(
                name,
                vec![
                    one(Rx, A, 0),
                    one(Rx, B, 1),
                    one(Rz, A, 2),
                    one(Rz, B, 3),
                    one(ctrl, B, 4),
                    one(ctrl, A, 5),
                    one(Rx, A, 6),
                    one(Rx, B, 7),
                    one(Rz, A, 8),
                    one(Rz, B, 9),
                ],
            )
        }
        // Canonical 15-parameter SU(4): local U3 layers around a three-CNOT core.
        AnsatzId::C9a | AnsatzId::C9b => {
            let mut g = Vec::with_capacity(26);
            g.extend(u3(A, 0));
            g.extend(u3(B, 3));
            g.push(fixed(Cnot, A));
            g.push(one(Ry, A, 6));
            g.push(one(Rz, B, 7));
            g.push(fixed(Cnot, B));
            g.push(one(Ry, A, 8));
            g.push(fixed(Cnot, A));
            g.extend(u3(A, 9));
            g.extend(u3(B, 12));
            CircuitTemplate::new("c9", g)
        }
    }
}

/// Pooling block: `CRz(t1)` with a filled control on `A`, then `CRx(t2)` with an
/// open control on `A`, both targeting `B`. `A` is discarded afterwards.
pub fn build_pool() -> CircuitTemplate {
    CircuitTemplate::new(
        "pool",
        vec![
            one(GateKind::CRz(Control::Filled), Role::A, 0),
            one(GateKind::CRx(Control::Open), Role::A, 1),
        ],
    )
}

/// Per-block parameter counts used by the model census.
pub const POOL_PARAMS: usize = 2;

/// Tests whether the rotation kinds in a template all have known shift rules.
pub fn all_rotations_shiftable(t: &CircuitTemplate) -> bool {
    t.gates()
        .iter()
        .filter(|g| matches!(g.angle, Angle::Slot(_)))
        .all(|g| g.kind.is_rotation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{StateVector, ONE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_params(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
    }

    fn max_unitarity_error(m: &Mat4) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let dot: C64 = (0..4).map(|k| m[k][i].conj() * m[k][j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                err = err.max((dot - e).norm());
            }
        }
        err
    }

    fn det4(m: &Mat4) -> C64 {
        // Laplace expansion along the first row.
        fn det3(a: [[C64; 3]; 3]) -> C64 {
            a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
        }
        let mut total = ZERO;
        for col in 0..4 {
            let minor: [[C64; 3]; 3] = std::array::from_fn(|r| {
                let cols: Vec<usize> = (0..4).filter(|c| *c != col).collect();
                std::array::from_fn(|c| m[r + 1][cols[c]])
            });
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            total += m[0][col] * det3(minor) * sign;
        }
        total
    }

    #[test]
    fn conv_parameter_counts() {
        let expected = [2, 2, 4, 6, 6, 6, 10, 10, 15, 15];
        for (id, n) in AnsatzId::ALL.iter().zip(expected) {
            assert_eq!(build_conv(*id).param_count(), n, "{id}");
        }
        assert_eq!(build_pool().param_count(), POOL_PARAMS);
    }

    #[test]
    fn parse_cli_names() {
        for id in AnsatzId::ALL {
            assert_eq!(id.as_str().parse::<AnsatzId>().unwrap(), id);
        }
        assert!("c10".parse::<AnsatzId>().is_err());
    }

    #[test]
    fn bound_templates_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in AnsatzId::ALL {
            let t = build_conv(id);
            for _ in 0..100 {
                let p = random_params(t.param_count(), &mut rng);
                assert!(max_unitarity_error(&t.compose(&p, None)) < 1e-10, "{id}");
            }
        }
        let pool = build_pool();
        for _ in 0..100 {
            let p = random_params(2, &mut rng);
            assert!(max_unitarity_error(&pool.compose(&p, None)) < 1e-10);
        }
    }

    #[test]
    fn bind_rejects_wrong_length() {
        assert!(build_conv(AnsatzId::C7).bind(&[0.0; 9]).is_err());
        assert!(build_conv(AnsatzId::C7).bind(&[0.0; 10]).is_ok());
    }

    #[test]
    fn c6_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = build_conv(AnsatzId::C6);
        for _ in 0..100 {
            let m = t.compose(&random_params(6, &mut rng), None);
            for row in &m {
                for v in row {
                    assert!(v.im.abs() < 1e-10);
                }
            }
            assert!(max_unitarity_error(&m) < 1e-10);
            assert!((det4(&m) - ONE).norm() < 1e-10);
        }
    }

    #[test]
    fn c2_at_zero_is_the_fixed_entangler() {
        let m = build_conv(AnsatzId::C2).compose(&[0.0, 0.0], None);
        let hh = mat4_mul(
            &gates::embed_1q(&gates::hadamard_matrix(), false),
            &gates::embed_1q(&gates::hadamard_matrix(), true),
        );
        let mut cz = mat4_identity();
        cz[3][3] = C64::new(-1.0, 0.0);
        let expected = mat4_mul(&cz, &hh);
        for i in 0..4 {
            for j in 0..4 {
                assert!((m[i][j] - expected[i][j]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn pool_at_zero_is_identity() {
        let m = build_pool().compose(&[0.0, 0.0], None);
        assert!((0..4).all(|i| (0..4).all(|j| (m[i][j] - mat4_identity()[i][j]).norm() < 1e-15)));
    }

    #[test]
    fn pool_open_control_flips_target() {
        // Control |0>, theta2 = pi: CRx with open control acts and flips B.
        let g = build_pool().bind(&[0.3, PI]).unwrap();
        let mut s = StateVector::zero(2).unwrap();
        s.apply_2q(&g, 0, 1).unwrap();
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for id in AnsatzId::ALL {
            let t = build_conv(id);
            let p = random_params(t.param_count(), &mut rng);
            let (m, derivs) = t.with_derivatives(&p);
            let direct = t.compose(&p, None);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((m[i][j] - direct[i][j]).norm() < 1e-12);
                }
            }
            let mut total = vec![[[ZERO; 4]; 4]; t.param_count()];
            for (slot, d) in derivs {
                for i in 0..4 {
                    for j in 0..4 {
                        total[slot][i][j] += d[i][j];
                    }
                }
            }
            let h = 1e-6;
            for (k, dk) in total.iter().enumerate() {
                let mut up = p.clone();
                up[k] += h;
                let mut dn = p.clone();
                dn[k] -= h;
                let (mu, md) = (t.compose(&up, None), t.compose(&dn, None));
                for i in 0..4 {
                    for j in 0..4 {
                        let fd = (mu[i][j] - md[i][j]) / (2.0 * h);
                        assert!((fd - dk[i][j]).norm() < 1e-8, "{id} slot {k}");
                    }
                }
            }
        }
    }

    /// Global-phase-insensitive distance to CNOT: 1 - |Tr(CNOT^dagger U)| / 4.
    fn cnot_infidelity(m: &Mat4) -> f64 {
        let cn = gates::controlled_matrix(&gates::pauli_x_matrix(), Control::Filled, true);
        let tr: C64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| cn[i][j].conj() * m[i][j])
            .sum();
        1.0 - tr.norm() / 4.0
    }

    #[test]
    fn c9_reaches_cnot() {
        // Gradient descent on the phase-insensitive infidelity from random starts.
        let t = build_conv(AnsatzId::C9a);
        let cn = gates::controlled_matrix(&gates::pauli_x_matrix(), Control::Filled, true);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut best = f64::INFINITY;
        let mut best_params = vec![];
        for _ in 0..20 {
            let mut p = random_params(15, &mut rng);
            let mut m = [0.0; 15];
            let mut v = [0.0; 15];
            for step in 1..=3000 {
                let (u, derivs) = t.with_derivatives(&p);
                let tr: C64 = (0..4)
                    .flat_map(|i| (0..4).map(move |j| (i, j)))
                    .map(|(i, j)| cn[i][j].conj() * u[i][j])
                    .sum();
                let mut g = [0.0; 15];
                for (slot, d) in &derivs {
                    let dtr: C64 = (0..4)
                        .flat_map(|i| (0..4).map(move |j| (i, j)))
                        .map(|(i, j)| cn[i][j].conj() * d[i][j])
                        .sum();
                    // d|tr|/dt = Re(conj(tr) dtr) / |tr|
                    g[*slot] -= (tr.conj() * dtr).re / tr.norm().max(1e-300) / 4.0;
                }
                for k in 0..15 {
                    m[k] = 0.9 * m[k] + 0.1 * g[k];
                    v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
                    let mh = m[k] / (1.0 - 0.9f64.powi(step));
                    let vh = v[k] / (1.0 - 0.999f64.powi(step));
                    p[k] -= 0.02 * mh / (vh.sqrt() + 1e-12);
                }
            }
            let inf = cnot_infidelity(&t.compose(&p, None));
            if inf < best {
                best = inf;
                best_params = p;
            }
            if best < 1e-13 {
                break;
            }
        }
        let u = t.compose(&best_params, None);
        let tr: C64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| cn[i][j].conj() * u[i][j])
            .sum();
        let phase = tr / tr.norm();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (u[i][j] - phase * cn[i][j]).norm() < 1e-6,
                    "best infidelity {best}"
                );
            }
        }
    }
}
