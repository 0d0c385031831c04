//! Patient-level splitting and mini-batch assembly.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Slice};
use crate::loss::one_hot;
use crate::tensor::Tensor;

/// Splits distinct case ids into `(train, val)` with `round(ratio · n)`
/// training cases, clamped so both sides are non-empty.
pub fn split_train_val(case_ids: &[String], ratio: f64, seed: u64) -> Result<(Vec<String>, Vec<String>), DataError> {
    let unique: BTreeSet<&String> = case_ids.iter().collect();
    let n = unique.len();
    if n < 2 {
        return Err(DataError::TooFewCases(n));
    }
    let mut ids: Vec<String> = unique.into_iter().cloned().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let val = ids.split_off(n_train);
    Ok((ids, val))
}

/// Sample order for one epoch, fixed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Network input and one-hot target for a group of equally sized slices.
pub struct Batch {
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
    pub target: Tensor<f32>,
}

pub fn make_batch(slices: &[&Slice], num_classes: usize) -> Batch {
    let (h, w) = (slices[0].h, slices[0].w);
    let b = slices.len();
    let mut images = Vec::with_capacity(b * h * w);
    let mut labels = Vec::with_capacity(b * h * w);
    for s in slices {
        assert_eq!((s.h, s.w), (h, w), "batch slices must share a size");
        images.extend_from_slice(&s.image);
        labels.extend_from_slice(&s.label);
    }
    let target = one_hot(&labels, b, num_classes, h, w);
    Batch { images: Tensor::from_vec(&[b, 1, h, w], images), labels, target }
}
