use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qcnn::cnn::Cnn;
use qcnn::training::gradient;
use qcnn::{
    AnsatzId, CnnSpec, EncodingKind, EncodingSpec, GradientMethod, Loss, Model, ModelSpec,
    StateVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.01..hi)).collect()
}

fn two_qubit_gate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Model::new(ModelSpec::qcnn(
        EncodingSpec::new(EncodingKind::Amplitude, 8).unwrap(),
        AnsatzId::C9a,
    ))
    .unwrap();
    let op = model.ops()[0];
    let params = random(model.param_count(), 6.0, &mut rng);
    let gate = model
        .template(op.kind)
        .bind(model.op_params(&op, &params))
        .unwrap();
    let mut state = StateVector::from_real(8, &random(256, 1.0, &mut rng)).unwrap();
    let mut group = c.benchmark_group("apply_2q");
    for (a, b) in [(0, 1), (3, 4), (7, 0)] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{a}-{b}")),
            &(a, b),
            |bench, &(a, b)| bench.iter(|| state.apply_2q(black_box(&gate), a, b).unwrap()),
        );
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("forward");
    for (kind, id) in [
        (EncodingKind::Amplitude, AnsatzId::C9b),
        (EncodingKind::Qubit, AnsatzId::C3),
        (EncodingKind::Dense, AnsatzId::C9b),
    ] {
        let enc = EncodingSpec::new(kind, 8).unwrap();
        let model = Model::new(ModelSpec::qcnn(enc, id)).unwrap();
        let params = random(model.param_count(), 6.0, &mut rng);
        let x = random(enc.capacity(), 3.0, &mut rng);
        group.bench_function(format!("{kind}-{}", id.as_str()), |b| {
            b.iter(|| model.forward(black_box(&params), black_box(&x)).unwrap())
        });
    }
    group.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let enc = EncodingSpec::new(EncodingKind::Amplitude, 8).unwrap();
    let model = Model::new(ModelSpec::qcnn(enc, AnsatzId::C9a)).unwrap();
    let params = random(model.param_count(), 6.0, &mut rng);
    let xs: Vec<Vec<f64>> = (0..25).map(|_| random(256, 1.0, &mut rng)).collect();
    let bx: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let ys: Vec<u8> = (0..25).map(|i| (i % 2) as u8).collect();
    let mut group = c.benchmark_group("gradient_batch25_c9a");
    group.sample_size(20);
    for method in [GradientMethod::Adjoint, GradientMethod::ParameterShift] {
        group.bench_function(method.as_str(), |b| {
            b.iter(|| {
                gradient(
                    &model,
                    black_box(&params),
                    &bx,
                    &ys,
                    Loss::CrossEntropy,
                    method,
                )
                .unwrap()
            })
        });
    }
    group.finish();

    let cnn = Cnn::new(&CnnSpec::new(16, 56).unwrap()).unwrap();
    let cparams = cnn.init_params(&mut rng);
    let cx: Vec<Vec<f64>> = (0..25).map(|_| random(16, 3.0, &mut rng)).collect();
    let cbx: Vec<&[f64]> = cx.iter().map(Vec::as_slice).collect();
    c.bench_function("cnn56_gradient_batch25", |b| {
        b.iter(|| {
            cnn.gradient(black_box(&cparams), &cbx, &ys, Loss::CrossEntropy)
                .unwrap()
        })
    });
}

criterion_group!(benches, two_qubit_gate, forward, batch_gradient);
criterion_main!(benches);
