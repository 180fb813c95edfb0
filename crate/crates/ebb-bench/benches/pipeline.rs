//! Benchmarks along the training and prediction path: the dual solver
//! they all stand on, bank training, calibration, prediction, sigmoid
//! fitting, and the constrained trainer.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use ebb_core::csvm::{train_csvm, ConstraintTargets, CsvmSpec};
use ebb_core::rng::SplitMix64;
use ebb_core::{
    calibrate_thresholds, fit_sigmoid, train_ensemble, train_svm, EnsembleBank, EnsembleSettings,
    Features, ParameterGrid,
};

/// Two Gaussian-ish blobs, labels split evenly, 10% flipped.
fn blobs(seed: u64, m: usize, d: usize) -> (Features, Vec<i8>) {
    let mut rng = SplitMix64::new(seed);
    let mut unit = move || rng.next_u64() as f64 / u64::MAX as f64;
    let mut data = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let flipped = unit() < 0.1;
        let center = if flipped { -0.7 * side } else { 0.7 * side };
        data.push(center + (unit() - 0.5));
        for _ in 1..d {
            data.push(unit() - 0.5);
        }
        labels.push(if i % 2 == 0 { 1 } else { -1 });
    }
    (Features::new(d, data), labels)
}

fn trained_bank(m: usize, b: usize) -> (EnsembleBank, Features, Vec<i8>) {
    let (features, labels) = blobs(17, m, 4);
    let settings = EnsembleSettings {
        grid: ParameterGrid::new(vec![0.25, 1.0, 4.0]).unwrap(),
        n_replicates: b,
        redraw_attempts: 5,
        seed: 18,
    };
    let bank = train_ensemble(&features, &labels, &settings).unwrap();
    (bank, features, labels)
}

fn bench_svm_train(c: &mut Criterion) {
    let (features, labels) = blobs(3, 80, 6);
    c.bench_function("svm_train_80x6", |bench| {
        bench.iter(|| train_svm(black_box(&features), black_box(&labels), 1.0).unwrap())
    });
}

fn bench_bank_train(c: &mut Criterion) {
    let (features, labels) = blobs(5, 60, 4);
    let settings = EnsembleSettings {
        grid: ParameterGrid::new(vec![0.25, 1.0, 4.0]).unwrap(),
        n_replicates: 10,
        redraw_attempts: 5,
        seed: 6,
    };
    c.bench_function("bank_train_60x4_3theta_10b", |bench| {
        bench.iter(|| {
            train_ensemble(
                black_box(&features),
                black_box(&labels),
                black_box(&settings),
            )
            .unwrap()
        })
    });
}

fn bench_calibrate(c: &mut Criterion) {
    let (bank, features, labels) = trained_bank(60, 20);
    c.bench_function("calibrate_thresholds_60x4", |bench| {
        bench.iter(|| {
            calibrate_thresholds(
                black_box(&bank),
                black_box(&features),
                black_box(&labels),
                0.9,
            )
            .unwrap()
        })
    });
}

fn bench_predict(c: &mut Criterion) {
    let (bank, _, _) = trained_bank(60, 20);
    let (instances, _) = blobs(23, 100, 4);
    let predictor = bank.predictor(0.05).unwrap();
    c.bench_function("predict_100_instances", |bench| {
        bench.iter(|| predictor.probabilities(black_box(&instances)))
    });
}

fn bench_platt(c: &mut Criterion) {
    let mut rng = SplitMix64::new(41);
    let mut unit = move || rng.next_u64() as f64 / u64::MAX as f64;
    let mut scores = Vec::with_capacity(200);
    let mut labels = Vec::with_capacity(200);
    for i in 0..200 {
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        scores.push(side * (0.4 + unit()) + (unit() - 0.5));
        labels.push(if i % 2 == 0 { 1i8 } else { -1 });
    }
    c.bench_function("platt_fit_200_scores", |bench| {
        bench.iter_batched(
            || (scores.clone(), labels.clone()),
            |(s, l)| fit_sigmoid(black_box(&s), black_box(&l)).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_csvm(c: &mut Criterion) {
    let (features, labels) = blobs(29, 24, 3);
    let spec = CsvmSpec {
        cost: 1.0,
        targets: ConstraintTargets {
            tpr: Some(0.9),
            tnr: None,
        },
        ..CsvmSpec::default()
    };
    c.bench_function("csvm_constrained_24x3", |bench| {
        bench.iter(|| train_csvm(black_box(&features), black_box(&labels), black_box(&spec)))
    });
}

criterion_group!(
    benches,
    bench_svm_train,
    bench_bank_train,
    bench_calibrate,
    bench_predict,
    bench_platt,
    bench_csvm
);
criterion_main!(benches);
