//! Classical-to-quantum state encoders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simulator::{StateVector, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EncodingKind {
    Amplitude,
    Qubit,
    Dense,
    HybridDirect,
    HybridAngle,
}

impl EncodingKind {
    pub const ALL: [EncodingKind; 5] = [
        Self::Amplitude,
        Self::Qubit,
        Self::Dense,
        Self::HybridDirect,
        Self::HybridAngle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Amplitude => "amplitude",
            Self::Qubit => "qubit",
            Self::Dense => "dense",
            Self::HybridDirect => "hde",
            Self::HybridAngle => "hae",
        }
    }
}

impl fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncodingKind {
    type Err = crate::QcnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "amplitude" | "amp" => Ok(Self::Amplitude),
            "qubit" => Ok(Self::Qubit),
            "dense" => Ok(Self::Dense),
            "hde" | "hybrid_direct" => Ok(Self::HybridDirect),
            "hae" | "hybrid_angle" => Ok(Self::HybridAngle),
            other => Err(invalid!("unknown encoding `{other}`")),
        }
    }
}

/// Encoding scheme plus register geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub kind: EncodingKind,
    pub n_qubits: usize,
    /// Qubits per block (hybrid only, otherwise 0).
    pub block_qubits: usize,
    /// Number of blocks (hybrid only, otherwise 0).
    pub blocks: usize,
}

impl EncodingSpec {
    /// Standard geometry on `n_qubits`; hybrid encoders use two blocks.
    pub fn new(kind: EncodingKind, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(invalid!("encoding needs at least one qubit"));
        }
        match kind {
            EncodingKind::HybridDirect | EncodingKind::HybridAngle => {
                if n_qubits % 2 != 0 {
                    return Err(invalid!(
                        "hybrid encodings need an even qubit count, got {n_qubits}"
                    ));
                }
                Self::hybrid(kind, n_qubits / 2, 2)
            }
            _ => Ok(Self {
                kind,
                n_qubits,
                block_qubits: 0,
                blocks: 0,
            }),
        }
    }

    pub fn hybrid(kind: EncodingKind, block_qubits: usize, blocks: usize) -> Result<Self> {
        if !matches!(kind, EncodingKind::HybridDirect | EncodingKind::HybridAngle) {
            return Err(invalid!("{kind} is not a hybrid encoding"));
        }
        if block_qubits == 0 || blocks == 0 {
            return Err(invalid!("hybrid encoding needs m >= 1 and b >= 1"));
        }
        Ok(Self {
            kind,
            n_qubits: block_qubits * blocks,
            block_qubits,
            blocks,
        })
    }

    /// Number of classical features consumed.
    pub fn capacity(&self) -> usize {
        let n = self.n_qubits;
        match self.kind {
            EncodingKind::Amplitude => 1 << n,
            EncodingKind::Qubit => n,
            EncodingKind::Dense => 2 * n,
            EncodingKind::HybridDirect => self.blocks << self.block_qubits,
            EncodingKind::HybridAngle => self.blocks * ((1 << self.block_qubits) - 1),
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        let amps = self.encode_amplitudes(x)?;
        StateVector::from_amplitudes(self.n_qubits, amps)
    }

    pub(crate) fn encode_amplitudes(&self, x: &[f64]) -> Result<Vec<C64>> {
        if x.len() != self.capacity() {
            return Err(invalid!(
                "{} encoding on {} qubits takes {} features, got {}",
                self.kind,
                self.n_qubits,
                self.capacity(),
                x.len()
            ));
        }
        match self.kind {
            EncodingKind::Amplitude => amplitude(x),
            EncodingKind::Qubit => qubit(x),
            EncodingKind::Dense => dense(x),
            EncodingKind::HybridDirect => hybrid_direct(x, self.block_qubits, self.blocks),
            EncodingKind::HybridAngle => hybrid_angle(x, self.block_qubits, self.blocks),
        }
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(invalid!(
            "amplitude encoding needs a power-of-two length >= 2, got {len}"
        ));
    }
    Ok(len.trailing_zeros() as usize)
}

fn amplitude(x: &[f64]) -> Result<Vec<C64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(invalid!(
            "cannot amplitude-encode a vector with norm {norm}"
        ));
    }
    Ok(x.iter().map(|v| C64::new(v / norm, 0.0)).collect())
}

/// Kronecker product of per-qubit or per-block states, first factor most significant.
fn kron_all(factors: &[Vec<C64>]) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for a in &out {
            for b in f {
                next.push(a * b);
            }
        }
        out = next;
    }
    out
}

fn qubit(x: &[f64]) -> Result<Vec<C64>> {
    let mut factors = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        if !(0.0..std::f64::consts::PI).contains(&v) {
            return Err(invalid!("qubit-encoding feature {i} = {v} outside [0, pi)"));
        }
        let (s, c) = (v / 2.0).sin_cos();
        factors.push(vec![C64::new(c, 0.0), C64::new(s, 0.0)]);
    }
    Ok(kron_all(&factors))
}

/// Qubit `j` gets `Ry(x[n + j]) Rx(x[j]) |0>` for `n = N / 2`.
fn dense(x: &[f64]) -> Result<Vec<C64>> {
    if x.len() % 2 != 0 || x.is_empty() {
        return Err(invalid!(
            "dense encoding needs an even, nonzero feature count, got {}",
            x.len()
        ));
    }
    let n = x.len() / 2;
    let factors: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            // Rx(a)|0> = (cos(a/2), -i sin(a/2))
            let (sa, ca) = (x[j] / 2.0).sin_cos();
            let (sb, cb) = (x[n + j] / 2.0).sin_cos();
            let v0 = C64::new(ca, 0.0);
            let v1 = C64::new(0.0, -sa);
            vec![v0 * cb - v1 * sb, v0 * sb + v1 * cb]
        })
        .collect();
    Ok(kron_all(&factors))
}

fn hybrid_direct(x: &[f64], m: usize, b: usize) -> Result<Vec<C64>> {
    let block = 1usize << m;
    let mut factors = Vec::with_capacity(b);
    for k in 0..b {
        let slice = &x[k * block..(k + 1) * block];
        factors
            .push(amplitude(slice).map_err(|_| invalid!("hybrid direct block {k} has zero norm"))?);
    }
    Ok(kron_all(&factors))
}

/// Per block: the amplitude of basis `i` is a product over bits `i_j` (most
/// significant first) of `cos` or `sin` of the angle indexed by the bits seen so far.
fn hybrid_angle(x: &[f64], m: usize, b: usize) -> Result<Vec<C64>> {
    let per_block = (1usize << m) - 1;
    let mut factors = Vec::with_capacity(b);
    for k in 0..b {
        let angles = &x[k * per_block..(k + 1) * per_block];
        let mut amps = vec![ZERO; 1 << m];
        for (i, amp) in amps.iter_mut().enumerate() {
            let mut value = 1.0;
            let mut prefix = 0usize;
            for j in 0..m {
                let bit = (i >> (m - 1 - j)) & 1;
                // 1-based g(j) = 2^j + sum_{l<j} i_l 2^l
                let g = (1usize << j) + prefix;
                let (s, c) = angles[g - 1].sin_cos();
                value *= if bit == 1 { s } else { c };
                prefix += bit << j;
            }
            *amp = C64::new(value, 0.0);
        }
        factors.push(amps);
    }
    Ok(kron_all(&factors))
}

pub fn encode_amplitude(x: &[f64], n_qubits: usize) -> Result<StateVector> {
    if qubits_for_len(x.len())? != n_qubits {
        return Err(invalid!(
            "amplitude encoding on {n_qubits} qubits takes {} features, got {}",
            1usize << n_qubits,
            x.len()
        ));
    }
    EncodingSpec::new(EncodingKind::Amplitude, n_qubits)?.encode(x)
}

pub fn encode_qubit(x: &[f64]) -> Result<StateVector> {
    EncodingSpec::new(EncodingKind::Qubit, x.len())?.encode(x)
}

pub fn encode_dense(x: &[f64]) -> Result<StateVector> {
    if x.len() % 2 != 0 {
        return Err(invalid!(
            "dense encoding needs an even feature count, got {}",
            x.len()
        ));
    }
    EncodingSpec::new(EncodingKind::Dense, x.len() / 2)?.encode(x)
}

pub fn encode_hybrid_direct(x: &[f64], m: usize, b: usize) -> Result<StateVector> {
    EncodingSpec::hybrid(EncodingKind::HybridDirect, m, b)?.encode(x)
}

pub fn encode_hybrid_angle(x: &[f64], m: usize, b: usize) -> Result<StateVector> {
    EncodingSpec::hybrid(EncodingKind::HybridAngle, m, b)?.encode(x)
}
