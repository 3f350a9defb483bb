//! Seeded inputs shared by the benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;
use ssrl_core::autograd::Tensor;
use ssrl_core::rng;

pub fn randn(seed: u64, shape: &[usize]) -> Tensor {
    let mut r = rng::stream(seed, &[rng::tag("bench")]);
    Tensor::from_fn(shape, |_| r.sample::<f64, _>(StandardNormal))
}

/// Two Gaussian clouds in `d` dimensions, labels in {-1, +1}.
pub fn blobs(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut r = rng::stream(seed, &[rng::tag("bench-blobs")]);
    (0..n)
        .map(|i| {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            let x = (0..d).map(|_| r.sample::<f64, _>(StandardNormal) + 0.5 * f64::from(y)).collect();
            (x, y)
        })
        .unzip()
}

/// Images in `[-1, 1]`, as the training loop sees them.
pub fn images(seed: u64, n: usize, c: usize, side: usize) -> Tensor {
    let t = randn(seed, &[n, c, side, side]);
    Tensor::from_fn(t.shape(), |i| t.data()[i].tanh())
}
