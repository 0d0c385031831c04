//! Shared inputs for the benchmarks.

use csegnet::loss::one_hot;
use csegnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in `[-1, 1)`.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Random images and one-hot targets of a `(batch, 1, size, size)` batch.
pub fn random_batch(batch: usize, size: usize, classes: usize, seed: u64) -> (Tensor<f32>, Tensor<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..batch * size * size).map(|_| rng.gen_range(0..classes) as u8).collect();
    (random_tensor(&[batch, 1, size, size], seed), one_hot(&labels, batch, classes, size, size))
}
