use criterion::{criterion_group, criterion_main, Criterion};
use nnsdr::baselines::{kernel_weights, local_linear, opg_fit, reduce_rows, KernelConfig};
use nnsdr::linalg::{eigen_sym, polar_retract, Matrix};
use nnsdr::mlp::{self, TrainConfig};
use nnsdr::nnsdr::{fit_stage1, NnSdrConfig};
use nnsdr_bench::{m6_data, m6_sample, random_symmetric, stage1_net};
use std::hint::black_box;

fn bench_linalg(c: &mut Criterion) {
    let a20 = random_symmetric(20);
    let a64 = random_symmetric(64);
    c.bench_function("eigen_sym_p20", |b| {
        b.iter(|| eigen_sym(black_box(&a20)).unwrap())
    });
    c.bench_function("eigen_sym_p64", |b| {
        b.iter(|| eigen_sym(black_box(&a64)).unwrap())
    });
    let m = Matrix::from_fn(20, 3, |i, j| ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.4);
    c.bench_function("polar_retract_20x3", |b| {
        b.iter(|| polar_retract(black_box(&m)).unwrap())
    });
}

fn bench_mlp(c: &mut Criterion) {
    let net = stage1_net(20, 512, 3);
    let x: Vec<f64> = (0..20).map(|i| (i as f64 / 10.0) - 1.0).collect();
    c.bench_function("forward_eval_p20_h512", |b| {
        b.iter(|| mlp::forward(black_box(&net), black_box(&x), None).unwrap())
    });
    c.bench_function("grad_input_p20_h512", |b| {
        b.iter(|| mlp::grad_input(black_box(&net), black_box(&x)).unwrap())
    });
    let data = m6_data(200, 20);
    c.bench_function("train_epoch_p20_h512_n200", |b| {
        b.iter(|| {
            let cfg = TrainConfig {
                epochs: 1,
                rng_seed: 5,
                ..TrainConfig::default()
            };
            mlp::train(black_box(&data), stage1_net(20, 512, 3), &cfg, None).unwrap()
        })
    });
}

fn bench_baselines(c: &mut Criterion) {
    let sample = m6_sample(200, 20);
    let z = reduce_rows(sample.data.x(), &sample.b_true);
    c.bench_function("kernel_weights_n200_k3", |b| {
        b.iter(|| kernel_weights(black_box(&z), 17, 1.0).unwrap())
    });
    c.bench_function("local_linear_n200_k3", |b| {
        b.iter(|| local_linear(black_box(sample.data.y()), black_box(&z), 1.0, 1e-8).unwrap())
    });
    let mut group = c.benchmark_group("fits");
    group.sample_size(10);
    group.bench_function("opg_fit_m6_n200_p20", |b| {
        b.iter(|| opg_fit(black_box(&sample.data), 3, &KernelConfig::default()).unwrap())
    });
    let mut cfg = NnSdrConfig::new(3).with_seed(11).with_hidden(vec![64]);
    cfg.stage1.epochs = 10;
    group.bench_function("nn_stage1_small_m6", |b| {
        b.iter(|| fit_stage1(black_box(&sample.data), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_linalg, bench_mlp, bench_baselines);
criterion_main!(benches);
