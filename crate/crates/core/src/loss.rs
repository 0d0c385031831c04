//! Generalized Dice loss and the deep-supervision combination of per-head
//! losses.

use crate::autodiff::{Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

/// Floor on per-class target volume when forming weights, so absent classes
/// get the finite weight `1 / EPS²`.
pub const ABSENT_CLASS_EPS: f64 = 1e-6;

/// Tolerance on per-pixel channel sums of a probability map.
pub const NORMALIZATION_TOL: f64 = 1e-4;

/// Per-class weights `ω_l = 1 / (Σ_n r_ln)²`, computed over the whole batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    pub omega: Vec<f64>,
}

impl ClassWeights {
    pub fn from_counts(counts: &[f64]) -> Self {
        let omega = counts
            .iter()
            .map(|&c| {
                let c = c.max(ABSENT_CLASS_EPS);
                1.0 / (c * c)
            })
            .collect();
        Self { omega }
    }

    pub fn from_target<T: Scalar>(target: &Tensor<T>) -> Result<Self, TensorError> {
        Ok(Self::from_counts(&class_volumes(target)?))
    }
}

/// `Σ_{b,h,w} t[b, l, h, w]` for each channel `l`.
pub fn class_volumes<T: Scalar>(t: &Tensor<T>) -> Result<Vec<f64>, TensorError> {
    let [b, n, h, w] = t.dims4()?;
    let hw = h * w;
    let mut out = vec![0.0; n];
    for bi in 0..b {
        for (l, acc) in out.iter_mut().enumerate() {
            *acc += t.data()[(bi * n + l) * hw..][..hw].iter().map(|v| v.as_f64()).sum::<f64>();
        }
    }
    Ok(out)
}

fn check_one_hot<T: Scalar>(t: &Tensor<T>) -> Result<(), TensorError> {
    let [b, n, h, w] = t.dims4()?;
    let hw = h * w;
    for bi in 0..b {
        for p in 0..hw {
            let mut sum = T::zero();
            for l in 0..n {
                let v = t.data()[(bi * n + l) * hw + p];
                if v != T::zero() && v != T::one() {
                    return Err(TensorError::NotOneHot(bi * hw + p));
                }
                sum += v;
            }
            if sum != T::one() {
                return Err(TensorError::NotOneHot(bi * hw + p));
            }
        }
    }
    Ok(())
}

fn check_normalized<T: Scalar>(p: &Tensor<T>) -> Result<(), TensorError> {
    let [b, n, h, w] = p.dims4()?;
    let hw = h * w;
    for bi in 0..b {
        for px in 0..hw {
            let sum: f64 = (0..n).map(|l| p.data()[(bi * n + l) * hw + px].as_f64()).sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(TensorError::NotNormalized { pixel: bi * hw + px, sum });
            }
        }
    }
    Ok(())
}

/// Generalized Dice loss
///
/// `1 − 2 · Σ_l ω_l Σ_n r_ln p_ln / Σ_l ω_l Σ_n (r_ln + p_ln)`
///
/// `pred` holds per-pixel class probabilities and `target` the one-hot
/// ground truth, both `(B, N, H, W)`. The weights are treated as constants.
pub fn gdl<T: Scalar>(g: &mut Graph<T>, pred: Var, target: &Tensor<T>) -> Result<Var, TensorError> {
    if g.shape(pred) != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "gdl",
            lhs: g.shape(pred).to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    check_one_hot(target)?;
    check_normalized(g.value(pred))?;
    gdl_unchecked(g, pred, target)
}

/// [`gdl`] without input validation; for probability maps assembled on the
/// graph itself.
pub(crate) fn gdl_unchecked<T: Scalar>(g: &mut Graph<T>, pred: Var, target: &Tensor<T>) -> Result<Var, TensorError> {
    let n = target.shape()[1];
    let volumes = class_volumes(target)?;
    let weights = ClassWeights::from_counts(&volumes);
    let omega = g.constant(Tensor::from_vec(&[n], weights.omega.iter().map(|&w| T::lit(w)).collect()));
    let r = g.constant(target.clone());
    let rsum = g.constant(Tensor::from_vec(&[n], volumes.iter().map(|&v| T::lit(v)).collect()));

    let rp = g.mul(pred, r)?;
    let inter = g.reduce_sum(rp, &[0, 2, 3], false)?;
    let weighted_inter = g.mul(inter, omega)?;
    let numerator = g.sum_all(weighted_inter)?;

    let psum = g.reduce_sum(pred, &[0, 2, 3], false)?;
    let total = g.add(psum, rsum)?;
    let weighted_total = g.mul(total, omega)?;
    let denominator = g.sum_all(weighted_total)?;

    let ratio = g.div(numerator, denominator)?;
    let twice = g.scale(ratio, T::lit(2.0))?;
    let one = g.constant(Tensor::scalar(T::one()));
    g.sub(one, twice)
}

/// Deep-supervision loss: `Σ_i w_i · gdl(softmax(head_i), target_i)`, where
/// `target_i` is the label map nearest-neighbor resampled to the resolution
/// of head `i`. `weights[0]` belongs to the main head; heads with weight 0
/// are skipped.
pub fn combined_loss<T: Scalar>(
    g: &mut Graph<T>,
    main_logits: Var,
    aux_logits: &[Var],
    target_onehot: &Tensor<T>,
    weights: &[f64],
) -> Result<Var, TensorError> {
    if weights.len() != 1 + aux_logits.len() {
        return Err(TensorError::WeightLengthMismatch { expected: 1 + aux_logits.len(), actual: weights.len() });
    }
    check_one_hot(target_onehot)?;
    let [b, n, h, w] = target_onehot.dims4()?;
    let labels = labels_from_one_hot(target_onehot)?;
    let mut total: Option<Var> = None;
    for (&head, &weight) in std::iter::once(&main_logits).chain(aux_logits).zip(weights) {
        if weight == 0.0 {
            continue;
        }
        let [hb, hn, hh, hw] = g.value(head).dims4()?;
        if hb != b || hn != n {
            return Err(TensorError::ShapeMismatch {
                op: "combined_loss",
                lhs: vec![b, n, h, w],
                rhs: vec![hb, hn, hh, hw],
            });
        }
        let target = if (hh, hw) == (h, w) {
            target_onehot.clone()
        } else {
            one_hot(&nearest_resize_labels(&labels, b, h, w, hh, hw), b, n, hh, hw)
        };
        let probs = g.softmax_channels(head)?;
        let term = gdl_unchecked(g, probs, &target)?;
        let term = g.scale(term, T::lit(weight))?;
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => Ok(g.constant(Tensor::scalar(T::zero()))),
    }
}

/// One-hot encodes a `(B, H, W)` label map into `(B, N, H, W)`.
pub fn one_hot<T: Scalar>(labels: &[u8], b: usize, n: usize, h: usize, w: usize) -> Tensor<T> {
    let hw = h * w;
    let mut data = vec![T::zero(); b * n * hw];
    for bi in 0..b {
        for p in 0..hw {
            let l = labels[bi * hw + p] as usize;
            debug_assert!(l < n);
            data[(bi * n + l) * hw + p] = T::one();
        }
    }
    Tensor::from_vec(&[b, n, h, w], data)
}

/// Channel argmax of `(B, N, H, W)`; ties resolve to the lowest class.
pub fn labels_from_one_hot<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>, TensorError> {
    let [b, n, h, w] = t.dims4()?;
    let hw = h * w;
    let mut out = vec![0u8; b * hw];
    for bi in 0..b {
        for p in 0..hw {
            let mut best = 0;
            let mut best_v = t.data()[bi * n * hw + p];
            for l in 1..n {
                let v = t.data()[(bi * n + l) * hw + p];
                if v > best_v {
                    best = l;
                    best_v = v;
                }
            }
            out[bi * hw + p] = best as u8;
        }
    }
    Ok(out)
}

/// Nearest-neighbor resampling of `(B, H, W)` labels with half-pixel centers.
pub fn nearest_resize_labels(labels: &[u8], b: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<u8> {
    let src_index =
        |o: usize, out: usize, inp: usize| (((o as f64 + 0.5) * inp as f64 / out as f64) as usize).min(inp - 1);
    let ys: Vec<usize> = (0..oh).map(|o| src_index(o, oh, h)).collect();
    let xs: Vec<usize> = (0..ow).map(|o| src_index(o, ow, w)).collect();
    let mut out = Vec::with_capacity(b * oh * ow);
    for bi in 0..b {
        for &y in &ys {
            for &x in &xs {
                out.push(labels[(bi * h + y) * w + x]);
            }
        }
    }
    out
}
