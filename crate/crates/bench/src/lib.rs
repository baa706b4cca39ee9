//! Shared fixtures for the criterion benches.

use nnsdr::linalg::Matrix;
use nnsdr::mlp::{Activation, LayerSpec, MlpParams};
use nnsdr::simgen::{generate, ModelId, SimSpec};
use nnsdr::{DataSet, SimSample};

pub fn m6_sample(n: usize, p: usize) -> SimSample {
    generate(&SimSpec::new(ModelId::M6, 42).with_size(n, p)).unwrap()
}

pub fn m6_data(n: usize, p: usize) -> DataSet {
    m6_sample(n, p).data
}

pub fn random_symmetric(p: usize) -> Matrix {
    let raw = Matrix::from_fn(p, p, |i, j| {
        let h = nnsdr::seed::mix(7, &[i as u64, j as u64]);
        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let mut sym = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            sym.set(i, j, 0.5 * (raw.get(i, j) + raw.get(j, i)));
        }
    }
    sym
}

pub fn stage1_net(p: usize, hidden: usize, seed: u64) -> MlpParams {
    let mut rng = nnsdr::seed::rng_for(seed, &[1]);
    MlpParams::init_glorot(
        &[
            LayerSpec::new(p, hidden, Activation::Relu).with_dropout(0.4),
            LayerSpec::new(hidden, 1, Activation::Identity),
        ],
        &mut rng,
    )
    .unwrap()
}
