//! Dense state-vector simulation.
//!
//! Basis index `i` of an `n`-qubit register stores qubit 0 in its most
//! significant bit, so qubit `q` corresponds to bit `n - 1 - q`. Pooled
//! (discarded) qubits are never traced out explicitly: later gates simply do
//! not touch them, and readout marginalizes over everything except the
//! measured qubit.

use num_complex::Complex64;

use crate::error::{invalid, QcnnError, Result};

pub type C64 = Complex64;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 24;

const UNITARY_TOL: f64 = 1e-12;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// A 2x2 complex matrix in row-major order.
pub type Mat2 = [[C64; 2]; 2];
/// A 4x4 complex matrix in row-major order, basis `|a b>` with `a` the high bit.
pub type Mat4 = [[C64; 4]; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// The all-zero computational basis state `|0...0>`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. Only the length is checked, so kernel-level code
    /// may work with unnormalized vectors.
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_register(n_qubits)?;
        if amplitudes.len() != 1 << n_qubits {
            return Err(invalid!(
                "expected {} amplitudes for {} qubits, got {}",
                1usize << n_qubits,
                n_qubits,
                amplitudes.len()
            ));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn from_real(n_qubits: usize, values: &[f64]) -> Result<Self> {
        Self::from_amplitudes(n_qubits, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_1q(&mut self, gate: &GateMatrix, target: usize) -> Result<()> {
        let m = gate.as_1q()?;
        self.check_qubit(target)?;
        apply_mat2(&mut self.amplitudes, self.n_qubits, m, target);
        Ok(())
    }

    /// Applies a two-qubit gate whose first basis bit is `q_a` and second is `q_b`.
    pub fn apply_2q(&mut self, gate: &GateMatrix, q_a: usize, q_b: usize) -> Result<()> {
        let m = gate.as_2q()?;
        self.check_qubit(q_a)?;
        self.check_qubit(q_b)?;
        if q_a == q_b {
            return Err(invalid!(
                "two-qubit gate needs distinct qubits, got {q_a} twice"
            ));
        }
        apply_mat4(&mut self.amplitudes, self.n_qubits, m, q_a, q_b);
        Ok(())
    }

    /// Z-basis statistics of one qubit, marginalized over all others.
    pub fn readout(&self, qubit: usize) -> Result<Readout> {
        self.check_qubit(qubit)?;
        Ok(readout_raw(&self.amplitudes, self.n_qubits, qubit))
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(invalid!(
                "qubit {q} out of range for {} qubits",
                self.n_qubits
            ));
        }
        Ok(())
    }
}

fn check_register(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(invalid!(
            "register size must be in 1..={MAX_QUBITS}, got {n_qubits}"
        ));
    }
    Ok(())
}

/// Measurement statistics of a single qubit in the computational basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Readout {
    pub p0: f64,
    pub p1: f64,
    pub z_expectation: f64,
}

pub(crate) fn readout_raw(amps: &[C64], n_qubits: usize, qubit: usize) -> Readout {
    let mask = 1usize << (n_qubits - 1 - qubit);
    let (mut p0, mut p1) = (0.0, 0.0);
    for (i, a) in amps.iter().enumerate() {
        if i & mask == 0 {
            p0 += a.norm_sqr();
        } else {
            p1 += a.norm_sqr();
        }
    }
    Readout {
        p0,
        p1,
        z_expectation: p0 - p1,
    }
}

/// A validated unitary acting on one or two qubits.
#[derive(Clone, Debug, PartialEq)]
pub enum GateMatrix {
    One(Mat2),
    Two(Mat4),
}

impl GateMatrix {
    pub fn one_qubit(m: Mat2) -> Result<Self> {
        check_unitary(&m.map(|r| r.to_vec()))?;
        Ok(Self::One(m))
    }

    pub fn two_qubit(m: Mat4) -> Result<Self> {
        check_unitary(&m.map(|r| r.to_vec()))?;
        Ok(Self::Two(m))
    }

    pub fn arity(&self) -> usize {
        match self {
            Self::One(_) => 1,
            Self::Two(_) => 2,
        }
    }

    fn as_1q(&self) -> Result<&Mat2> {
        match self {
            Self::One(m) => Ok(m),
            Self::Two(_) => Err(invalid!("expected a single-qubit gate")),
        }
    }

    fn as_2q(&self) -> Result<&Mat4> {
        match self {
            Self::Two(m) => Ok(m),
            Self::One(_) => Err(invalid!("expected a two-qubit gate")),
        }
    }
}

fn check_unitary(rows: &[Vec<C64>]) -> Result<()> {
    let d = rows.len();
    for i in 0..d {
        for j in 0..d {
            let dot: C64 = (0..d).map(|k| rows[k][i].conj() * rows[k][j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            if (dot - expected).norm() > UNITARY_TOL {
                return Err(QcnnError::ContractViolation(format!(
                    "gate is not unitary: (U^dagger U)[{i}][{j}] = {dot}"
                )));
            }
        }
    }
    Ok(())
}

/// Applies `m` to `target` with no validation.
pub(crate) fn apply_mat2(amps: &mut [C64], n_qubits: usize, m: &Mat2, target: usize) {
    let stride = 1usize << (n_qubits - 1 - target);
    let len = amps.len();
    let mut block = 0;
    while block < len {
        for i in block..block + stride {
            let a0 = amps[i];
            let a1 = amps[i + stride];
            amps[i] = m[0][0] * a0 + m[0][1] * a1;
            amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
        }
        block += 2 * stride;
    }
}

/// Applies `m` to the pair `(q_a, q_b)` with no validation.
pub(crate) fn apply_mat4(amps: &mut [C64], n_qubits: usize, m: &Mat4, q_a: usize, q_b: usize) {
    let ba = 1usize << (n_qubits - 1 - q_a);
    let bb = 1usize << (n_qubits - 1 - q_b);
    let offsets = [0, bb, ba, ba | bb];
    for base in 0..amps.len() {
        if base & (ba | bb) != 0 {
            continue;
        }
        let v = offsets.map(|o| amps[base + o]);
        for (r, &o) in offsets.iter().enumerate() {
            amps[base + o] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
        }
    }
}

/// Returns `sum_rest conj(bra[r, rest]) * ket[c, rest]` for the pair `(q_a, q_b)`,
/// i.e. the 4x4 matrix `R` with `<bra| (M (x) I) |ket> = sum_rc M[r][c] R[r][c]`.
pub(crate) fn pair_overlap(
    bra: &[C64],
    ket: &[C64],
    n_qubits: usize,
    q_a: usize,
    q_b: usize,
) -> Mat4 {
    let ba = 1usize << (n_qubits - 1 - q_a);
    let bb = 1usize << (n_qubits - 1 - q_b);
    let offsets = [0, bb, ba, ba | bb];
    let mut out = [[ZERO; 4]; 4];
    for base in 0..bra.len() {
        if base & (ba | bb) != 0 {
            continue;
        }
        let b = offsets.map(|o| bra[base + o].conj());
        let k = offsets.map(|o| ket[base + o]);
        for r in 0..4 {
            for c in 0..4 {
                out[r][c] += b[r] * k[c];
            }
        }
    }
    out
}

pub(crate) fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik == ZERO {
                continue;
            }
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub(crate) fn mat4_adjoint(a: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

pub(crate) fn mat4_identity() -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = ONE;
    }
    out
}

pub(crate) fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Standard gates. Rotations follow `R_a(theta) = exp(-i theta sigma_a / 2)`.
pub mod gates {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    /// Which control value activates a controlled gate.
    #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
    pub enum Control {
        /// Active when the control qubit is `|1>` (filled circle).
        Filled,
        /// Active when the control qubit is `|0>` (open circle).
        Open,
    }

    pub fn rx_matrix(theta: f64) -> Mat2 {
        let (s, c) = (theta / 2.0).sin_cos();
        [
            [C64::new(c, 0.0), C64::new(0.0, -s)],
            [C64::new(0.0, -s), C64::new(c, 0.0)],
        ]
    }

    pub fn ry_matrix(theta: f64) -> Mat2 {
        let (s, c) = (theta / 2.0).sin_cos();
        [
            [C64::new(c, 0.0), C64::new(-s, 0.0)],
            [C64::new(s, 0.0), C64::new(c, 0.0)],
        ]
    }

    pub fn rz_matrix(theta: f64) -> Mat2 {
        let (s, c) = (theta / 2.0).sin_cos();
        [[C64::new(c, -s), ZERO], [ZERO, C64::new(c, s)]]
    }

    pub fn hadamard_matrix() -> Mat2 {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        [[h, h], [h, -h]]
    }

    pub fn pauli_x_matrix() -> Mat2 {
        [[ZERO, ONE], [ONE, ZERO]]
    }

    /// `U3(theta, phi, lambda) = Rz(phi) Rx(-pi/2) Rz(theta) Rx(pi/2) Rz(lambda)`.
    pub fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> Mat2 {
        use std::f64::consts::FRAC_PI_2;
        let m = mat2_mul(&rx_matrix(FRAC_PI_2), &rz_matrix(lambda));
        let m = mat2_mul(&rz_matrix(theta), &m);
        let m = mat2_mul(&rx_matrix(-FRAC_PI_2), &m);
        mat2_mul(&rz_matrix(phi), &m)
    }

    /// Embeds a single-qubit matrix on the first (`on_first`) or second qubit of a pair.
    pub fn embed_1q(m: &Mat2, on_first: bool) -> Mat4 {
        let mut out = [[ZERO; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                let (ra, rb, ca, cb) = (r >> 1, r & 1, c >> 1, c & 1);
                out[r][c] = if on_first {
                    if rb == cb {
                        m[ra][ca]
                    } else {
                        ZERO
                    }
                } else if ra == ca {
                    m[rb][cb]
                } else {
                    ZERO
                };
            }
        }
        out
    }

    /// Controlled single-qubit gate on a pair. `control_first` selects which
    /// qubit of the pair is the control; the other is the target.
    pub fn controlled_matrix(m: &Mat2, control: Control, control_first: bool) -> Mat4 {
        let active = match control {
            Control::Filled => 1,
            Control::Open => 0,
        };
        let mut out = [[ZERO; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                let (rc, rt, cc, ct) = if control_first {
                    (r >> 1, r & 1, c >> 1, c & 1)
                } else {
                    (r & 1, r >> 1, c & 1, c >> 1)
                };
                if rc != cc {
                    continue;
                }
                out[r][c] = if rc == active {
                    m[rt][ct]
                } else if rt == ct {
                    ONE
                } else {
                    ZERO
                };
            }
        }
        out
    }

    pub fn rx(theta: f64) -> GateMatrix {
        GateMatrix::One(rx_matrix(theta))
    }

    pub fn ry(theta: f64) -> GateMatrix {
        GateMatrix::One(ry_matrix(theta))
    }

    pub fn rz(theta: f64) -> GateMatrix {
        GateMatrix::One(rz_matrix(theta))
    }

    pub fn hadamard() -> GateMatrix {
        GateMatrix::One(hadamard_matrix())
    }

    pub fn pauli_x() -> GateMatrix {
        GateMatrix::One(pauli_x_matrix())
    }

    /// CNOT with the first qubit of the pair as control.
    pub fn cnot() -> GateMatrix {
        GateMatrix::Two(controlled_matrix(&pauli_x_matrix(), Control::Filled, true))
    }

    pub fn cz() -> GateMatrix {
        let mut m = mat4_identity();
        m[3][3] = -ONE;
        GateMatrix::Two(m)
    }

    pub fn swap() -> GateMatrix {
        let mut m = [[ZERO; 4]; 4];
        m[0][0] = ONE;
        m[1][2] = ONE;
        m[2][1] = ONE;
        m[3][3] = ONE;
        GateMatrix::Two(m)
    }

    /// Controlled rotation, control on the first qubit of the pair.
    pub fn controlled(target: &GateMatrix, control: Control) -> Result<GateMatrix> {
        let m = target.as_1q()?;
        Ok(GateMatrix::Two(controlled_matrix(m, control, true)))
    }
}

#[cfg(test)]
mod tests {
    use super::gates::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
        let amps: Vec<C64> = (0..1 << n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        StateVector::from_amplitudes(n, amps.into_iter().map(|a| a / norm).collect()).unwrap()
    }

    /// Random unitary via Gram-Schmidt on a random complex matrix.
    fn random_unitary4(rng: &mut ChaCha8Rng) -> Mat4 {
        let mut cols: Vec<[C64; 4]> = (0..4)
            .map(|_| {
                std::array::from_fn(|_| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        for i in 0..4 {
            for j in 0..i {
                let proj: C64 = (0..4).map(|k| cols[j][k].conj() * cols[i][k]).sum();
                let cj = cols[j];
                for k in 0..4 {
                    cols[i][k] -= proj * cj[k];
                }
            }
            let n = cols[i].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            for k in 0..4 {
                cols[i][k] /= n;
            }
        }
        std::array::from_fn(|r| std::array::from_fn(|c| cols[c][r]))
    }

    #[test]
    fn init_zero_has_single_unit_amplitude() {
        assert_eq!(StateVector::zero(1).unwrap().amplitudes(), &[ONE, ZERO]);
        let s = StateVector::zero(3).unwrap();
        assert_eq!(s.amplitudes().len(), 8);
        assert_eq!(s.amplitudes()[0], ONE);
        assert!(s.amplitudes()[1..].iter().all(|a| *a == ZERO));
        let s = StateVector::zero(8).unwrap();
        assert_eq!(s.amplitudes().len(), 256);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_zero_rejects_out_of_range() {
        assert!(matches!(
            StateVector::zero(0),
            Err(QcnnError::InvalidArgument(_))
        ));
        assert!(matches!(
            StateVector::zero(25),
            Err(QcnnError::InvalidArgument(_))
        ));
    }

    #[test]
    fn ry_pi_flips_zero() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply_1q(&ry(PI), 0).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-15);
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rz_is_diagonal_phase() {
        let theta = 0.7;
        let mut s = StateVector::zero(1).unwrap();
        s.apply_1q(&rz(theta), 0).unwrap();
        let expected = C64::from_polar(1.0, -theta / 2.0);
        assert!((s.amplitudes()[0] - expected).norm() < 1e-15);
        assert!((s.readout(0).unwrap().z_expectation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hadamard_gives_zero_z() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply_1q(&hadamard(), 0).unwrap();
        assert!(s.readout(0).unwrap().z_expectation.abs() < 1e-12);
    }

    #[test]
    fn cnot_truth_table() {
        // |10> -> |11>, qubit 0 is the MSB.
        let mut s = StateVector::from_real(2, &[0.0, 0.0, 1.0, 0.0]).unwrap();
        s.apply_2q(&cnot(), 0, 1).unwrap();
        assert_eq!(s.amplitudes()[3], ONE);
        // Reversed roles: control qubit 1.
        let mut s = StateVector::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        s.apply_2q(&cnot(), 1, 0).unwrap();
        assert_eq!(s.amplitudes()[3], ONE);
    }

    #[test]
    fn swap_permutes_amplitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(2, &mut rng);
        let mut t = s.clone();
        t.apply_2q(&swap(), 0, 1).unwrap();
        let (a, b) = (s.amplitudes(), t.amplitudes());
        assert_eq!([b[0], b[1], b[2], b[3]], [a[0], a[2], a[1], a[3]]);
    }

    #[test]
    fn bit_order_is_msb_first() {
        let mut s = StateVector::zero(3).unwrap();
        s.apply_1q(&pauli_x(), 0).unwrap();
        assert_eq!(s.amplitudes()[0b100], ONE);
        let mut s = StateVector::zero(3).unwrap();
        s.apply_1q(&pauli_x(), 2).unwrap();
        assert_eq!(s.amplitudes()[0b001], ONE);
    }

    #[test]
    fn apply_2q_errors() {
        let mut s = StateVector::zero(3).unwrap();
        assert!(matches!(
            s.apply_2q(&cnot(), 1, 1),
            Err(QcnnError::InvalidArgument(_))
        ));
        assert!(matches!(
            s.apply_2q(&cnot(), 0, 3),
            Err(QcnnError::InvalidArgument(_))
        ));
        assert!(matches!(
            s.apply_1q(&rx(0.1), 3),
            Err(QcnnError::InvalidArgument(_))
        ));
        assert!(s.apply_1q(&cnot(), 0).is_err());
    }

    #[test]
    fn non_unitary_gate_is_rejected() {
        let m = [[ONE, ONE], [ZERO, ONE]];
        assert!(matches!(
            GateMatrix::one_qubit(m),
            Err(QcnnError::ContractViolation(_))
        ));
        assert!(GateMatrix::one_qubit(ry_matrix(0.3)).is_ok());
    }

    fn kron(a: &[Vec<C64>], b: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let (n, m) = (a.len(), b.len());
        let mut out = vec![vec![ZERO; n * m]; n * m];
        for i in 0..n {
            for j in 0..n {
                for k in 0..m {
                    for l in 0..m {
                        out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        out
    }

    /// Full 2^n x 2^n operator for a 4x4 gate on (q_a, q_b), built by
    /// conjugating an adjacent-pair Kronecker embedding with basis permutations.
    fn full_operator(m: &Mat4, n: usize, q_a: usize, q_b: usize) -> Vec<Vec<C64>> {
        let dim = 1 << n;
        let id2 = vec![vec![ONE, ZERO], vec![ZERO, ONE]];
        // Logical order: q_a, q_b, then the remaining qubits ascending.
        let mut order = vec![q_a, q_b];
        order.extend((0..n).filter(|q| *q != q_a && *q != q_b));
        let mut op: Vec<Vec<C64>> = m.iter().map(|r| r.to_vec()).collect();
        for _ in 2..n {
            op = kron(&op, &id2);
        }
        // perm maps physical index -> logical index.
        let perm = |i: usize| -> usize {
            let mut j = 0;
            for (pos, &q) in order.iter().enumerate() {
                let bit = (i >> (n - 1 - q)) & 1;
                j |= bit << (n - 1 - pos);
            }
            j
        };
        let mut out = vec![vec![ZERO; dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                out[i][j] = op[perm(i)][perm(j)];
            }
        }
        out
    }

    #[test]
    fn apply_2q_matches_full_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(qa, qb) in &[(0, 1), (6, 2), (7, 0), (3, 5)] {
            let u = random_unitary4(&mut rng);
            let s = random_state(8, &mut rng);
            let full = full_operator(&u, 8, qa, qb);
            let expected: Vec<C64> = (0..256)
                .map(|i| (0..256).map(|j| full[i][j] * s.amplitudes()[j]).sum())
                .collect();
            let mut t = s.clone();
            t.apply_2q(&GateMatrix::two_qubit(u).unwrap(), qa, qb)
                .unwrap();
            for (a, b) in t.amplitudes().iter().zip(&expected) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn readout_of_zero() {
        let r = StateVector::zero(2).unwrap().readout(1).unwrap();
        assert_eq!((r.p0, r.p1, r.z_expectation), (1.0, 0.0, 1.0));
    }

    #[test]
    fn readout_of_ry_encoded_qubit_is_cos() {
        for x in [0.0, 0.3, 1.1, FRAC_PI_2, 2.9] {
            let mut s = StateVector::zero(3).unwrap();
            s.apply_1q(&ry(x), 1).unwrap();
            let r = s.readout(1).unwrap();
            let direct = (x / 2.0).cos().powi(2) - (x / 2.0).sin().powi(2);
            assert!((r.z_expectation - direct).abs() < 1e-12);
            assert!((r.z_expectation - x.cos()).abs() < 1e-12);
            assert!((r.p0 + r.p1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn u3_matches_closed_form_up_to_phase() {
        // U3 in the Rz/Rx product form equals the textbook U3 up to a global phase.
        let (t, p, l) = (0.4, 1.3, -0.8);
        let m = u3_matrix(t, p, l);
        let textbook = [
            [
                C64::new((t / 2.0).cos(), 0.0),
                -C64::from_polar(1.0, l) * (t / 2.0).sin(),
            ],
            [
                C64::from_polar(1.0, p) * (t / 2.0).sin(),
                C64::from_polar(1.0, p + l) * (t / 2.0).cos(),
            ],
        ];
        let phase = m[0][0] / textbook[0][0];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[i][j] - phase * textbook[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn open_control_acts_on_zero() {
        let g = controlled(&rx(PI), gates::Control::Open).unwrap();
        let mut s = StateVector::zero(2).unwrap();
        s.apply_2q(&g, 0, 1).unwrap();
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
        let g = controlled(&rx(PI), gates::Control::Filled).unwrap();
        let mut s = StateVector::zero(2).unwrap();
        s.apply_2q(&g, 0, 1).unwrap();
        assert_eq!(s.amplitudes()[0], ONE);
    }

    #[test]
    fn pair_overlap_contracts_expectations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bra = random_state(5, &mut rng);
        let ket = random_state(5, &mut rng);
        let u = random_unitary4(&mut rng);
        let r = pair_overlap(bra.amplitudes(), ket.amplitudes(), 5, 3, 1);
        let mut applied = ket.clone();
        apply_mat4(applied.amplitudes_mut(), 5, &u, 3, 1);
        let direct = bra.inner(&applied);
        let contracted: C64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| u[i][j] * r[i][j])
            .sum();
        assert!((direct - contracted).norm() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn gates_preserve_norm(seed in any::<u64>(), n in 2usize..7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = random_state(n, &mut rng);
                for _ in 0..20 {
                    let qa = rng.random_range(0..n);
                    let mut qb = rng.random_range(0..n);
                    while qb == qa { qb = rng.random_range(0..n); }
                    if rng.random_bool(0.5) {
                        s.apply_1q(&ry(rng.random_range(0.0..6.0)), qa).unwrap();
                        s.apply_1q(&rz(rng.random_range(0.0..6.0)), qb).unwrap();
                    } else {
                        let u = GateMatrix::Two(random_unitary4(&mut rng));
                        s.apply_2q(&u, qa, qb).unwrap();
                    }
                }
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
            }

            #[test]
            fn apply_2q_is_linear(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = 4;
                let psi = random_state(n, &mut rng);
                let phi = random_state(n, &mut rng);
                let u = GateMatrix::Two(random_unitary4(&mut rng));
                let combo: Vec<C64> = psi.amplitudes().iter().zip(phi.amplitudes())
                    .map(|(a, b)| a * alpha + b * beta).collect();
                let mut lhs = StateVector::from_amplitudes(n, combo).unwrap();
                lhs.apply_2q(&u, 2, 0).unwrap();
                let (mut p, mut q) = (psi.clone(), phi.clone());
                p.apply_2q(&u, 2, 0).unwrap();
                q.apply_2q(&u, 2, 0).unwrap();
                for i in 0..1 << n {
                    let rhs = p.amplitudes()[i] * alpha + q.amplitudes()[i] * beta;
                    prop_assert!((lhs.amplitudes()[i] - rhs).norm() < 1e-12);
                }
            }

            #[test]
            fn disjoint_gates_commute(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = random_state(6, &mut rng);
                let u = GateMatrix::Two(random_unitary4(&mut rng));
                let v = GateMatrix::Two(random_unitary4(&mut rng));
                let mut a = s.clone();
                a.apply_2q(&u, 0, 3).unwrap();
                a.apply_2q(&v, 5, 1).unwrap();
                let mut b = s;
                b.apply_2q(&v, 5, 1).unwrap();
                b.apply_2q(&u, 0, 3).unwrap();
                for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
                    prop_assert!((x - y).norm() < 1e-12);
                }
            }
        }
    }
}
