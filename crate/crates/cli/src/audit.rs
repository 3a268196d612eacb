//! Structural parameter census and gradient cross-checks.

use std::fmt::Write as _;

use qcnn::cnn::{CnnPlan, CnnSpec, CNN_BUDGETS};
use qcnn::training::gradient;
use qcnn::{AnsatzId, EncodingKind, EncodingSpec, GradientMethod, Loss, Model, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliResult;

#[derive(Clone, Debug, PartialEq)]
pub struct CensusRow {
    pub ansatz: AnsatzId,
    /// Weight-shared QCNN total.
    pub shared: usize,
    /// HQC total without sharing.
    pub hqc_total: usize,
    /// HQC parameters with a nonzero gradient.
    pub hqc_effective: usize,
}

pub fn quantum_census(qubits: usize, seed: u64, draws: usize) -> CliResult<Vec<CensusRow>> {
    let enc = EncodingSpec::new(EncodingKind::Amplitude, qubits)?;
    AnsatzId::ALL
        .iter()
        .map(|&id| {
            let shared = Model::new(ModelSpec::qcnn(enc, id))?.param_count();
            let hqc = Model::new(ModelSpec::hqc(enc, id))?;
            Ok(CensusRow {
                ansatz: id,
                shared,
                hqc_total: hqc.param_count(),
                hqc_effective: hqc.effective_param_count(seed, draws),
            })
        })
        .collect()
}

pub fn cnn_census() -> CliResult<Vec<(CnnSpec, CnnPlan)>> {
    CNN_BUDGETS
        .iter()
        .map(|&(len, p)| {
            let spec = CnnSpec::new(len, p)?;
            Ok((spec, spec.plan()?))
        })
        .collect()
}

pub fn census_table(rows: &[CensusRow], cnn: &[(CnnSpec, CnnPlan)]) -> String {
    let mut out = String::from("ansatz  shared  hqc_total  hqc_effective\n");
    for r in rows {
        writeln!(
            out,
            "{:<6}  {:>6}  {:>9}  {:>13}",
            r.ansatz.as_str(),
            r.shared,
            r.hqc_total,
            r.hqc_effective
        )
        .unwrap();
    }
    out.push_str("\ncnn_params  input  plan\n");
    for (spec, plan) in cnn {
        writeln!(
            out,
            "{:>10}  {:>5}  {plan}",
            spec.target_params, spec.input_len
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckRow {
    pub ansatz: AnsatzId,
    pub loss: Loss,
    pub params: usize,
    /// Worst parameter-shift vs finite-difference error as a fraction of the tolerance.
    pub shift_vs_fd: f64,
    /// Worst adjoint vs parameter-shift error, same measure.
    pub adjoint_vs_shift: f64,
}

/// Relative tolerance for exact vs finite-difference gradients.
pub const GRAD_REL_TOL: f64 = 1e-5;
/// Absolute floor for components near zero.
pub const GRAD_ABS_TOL: f64 = 1e-8;

/// Worst `|a - b| / max(abs_tol, rel_tol * max(|a|, |b|))`; at most 1 means within tolerance.
pub fn grad_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / GRAD_ABS_TOL.max(GRAD_REL_TOL * x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}

impl GradcheckRow {
    pub fn passes(&self) -> bool {
        self.shift_vs_fd <= 1.0 && self.adjoint_vs_shift <= 1.0
    }
}

/// Compares the three gradient methods on `qubits`-qubit dense-encoded models.
pub fn gradcheck(
    ansatze: &[AnsatzId],
    losses: &[Loss],
    qubits: usize,
    batch: usize,
    seed: u64,
) -> CliResult<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = EncodingSpec::new(EncodingKind::Dense, qubits)?;
    let mut rows = Vec::new();
    for &id in ansatze {
        let model = Model::new(ModelSpec::qcnn(enc, id))?;
        for &loss in losses {
            let params: Vec<f64> = (0..model.param_count())
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            let xs: Vec<Vec<f64>> = (0..batch)
                .map(|_| {
                    (0..enc.capacity())
                        .map(|_| rng.random_range(0.0..std::f64::consts::PI))
                        .collect()
                })
                .collect();
            let bx: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let ys: Vec<u8> = (0..batch).map(|i| (i % 2) as u8).collect();
            let (_, fd) = gradient(
                &model,
                &params,
                &bx,
                &ys,
                loss,
                GradientMethod::FiniteDifference,
            )?;
            let (_, ps) = gradient(
                &model,
                &params,
                &bx,
                &ys,
                loss,
                GradientMethod::ParameterShift,
            )?;
            let (_, adj) = gradient(&model, &params, &bx, &ys, loss, GradientMethod::Adjoint)?;
            rows.push(GradcheckRow {
                ansatz: id,
                loss,
                params: model.param_count(),
                shift_vs_fd: grad_discrepancy(&ps, &fd),
                adjoint_vs_shift: grad_discrepancy(&adj, &ps),
            });
        }
    }
    Ok(rows)
}

pub fn gradcheck_table(rows: &[GradcheckRow]) -> String {
    let mut out = String::from(
        "errors are fractions of the tolerance (1e-5 relative, 1e-8 absolute floor)\n",
    );
    out.push_str("ansatz  loss  params  shift_vs_fd  adjoint_vs_shift  ok\n");
    for r in rows {
        writeln!(
            out,
            "{:<6}  {:<4}  {:>6}  {:>11.2e}  {:>16.2e}  {}",
            r.ansatz.as_str(),
            r.loss.as_str(),
            r.params,
            r.shift_vs_fd,
            r.adjoint_vs_shift,
            if r.passes() { "yes" } else { "NO" }
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrepancy_uses_floor_and_relative_error() {
        assert!((grad_discrepancy(&[1e-10], &[-1e-10]) - 0.02).abs() < 1e-12);
        assert!(
            (grad_discrepancy(&[1.0, 2.0], &[1.0, 2.00001]) - 1e-5 / (1e-5 * 2.00001)).abs() < 1e-6
        );
    }

    #[test]
    fn shared_totals_and_cnn_budgets() {
        let rows = quantum_census(8, 1, 1).unwrap();
        let shared: Vec<usize> = rows.iter().map(|r| r.shared).collect();
        assert_eq!(shared, vec![12, 12, 18, 24, 24, 24, 36, 36, 51, 45]);
        let cnn: Vec<usize> = cnn_census()
            .unwrap()
            .iter()
            .map(|(_, p)| p.param_count())
            .collect();
        assert_eq!(cnn, vec![26, 44, 34, 56]);
        assert!(census_table(&rows, &cnn_census().unwrap()).contains("c9b"));
    }

    #[test]
    fn gradcheck_passes_on_small_models() {
        let rows = gradcheck(
            &[AnsatzId::C2, AnsatzId::C9a],
            &[Loss::CrossEntropy],
            4,
            2,
            0,
        )
        .unwrap();
        assert!(
            rows.iter().all(GradcheckRow::passes),
            "{}",
            gradcheck_table(&rows)
        );
    }
}
