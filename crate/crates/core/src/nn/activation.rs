use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

struct ReluRule;

impl<T: Scalar> Backward<T> for ReluRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0];
        let data =
            x.data().iter().zip(ctx.grad.data()).map(|(&v, &g)| if v > T::zero() { g } else { T::zero() }).collect();
        vec![Some(Tensor::from_vec(x.shape(), data))]
    }
}

struct SoftmaxRule;

impl<T: Scalar> Backward<T> for SoftmaxRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let y = ctx.output;
        let [b, c, h, w] = y.dims4().expect("rank 4");
        let hw = h * w;
        let (yd, gd) = (y.data(), ctx.grad.data());
        let mut out = vec![T::zero(); y.numel()];
        for bi in 0..b {
            let base = bi * c * hw;
            let mut inner = vec![T::zero(); hw];
            for ch in 0..c {
                let off = base + ch * hw;
                for (p, acc) in inner.iter_mut().enumerate() {
                    *acc += yd[off + p] * gd[off + p];
                }
            }
            for ch in 0..c {
                let off = base + ch * hw;
                for p in 0..hw {
                    out[off + p] = yd[off + p] * (gd[off + p] - inner[p]);
                }
            }
        }
        vec![Some(Tensor::from_vec(y.shape(), out))]
    }
}

impl<T: Scalar> Graph<T> {
    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        Ok(self.record(value, vec![x], Box::new(ReluRule)))
    }

    /// Softmax over the channel axis of `(B, N, H, W)`.
    pub fn softmax_channels(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = softmax_channels(self.value(x))?;
        Ok(self.record(value, vec![x], Box::new(SoftmaxRule)))
    }
}

/// Per-pixel channel softmax, max-subtracted.
pub fn softmax_channels<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [b, c, h, w] = x.dims4()?;
    if c < 2 {
        return Err(TensorError::InvalidConfig(format!("softmax needs at least 2 channels, got {c}")));
    }
    let hw = h * w;
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    for bi in 0..b {
        let base = bi * c * hw;
        let mut max = xd[base..base + hw].to_vec();
        for ch in 1..c {
            for (m, &v) in max.iter_mut().zip(&xd[base + ch * hw..][..hw]) {
                *m = m.max(v);
            }
        }
        let mut total = vec![T::zero(); hw];
        for ch in 0..c {
            let off = base + ch * hw;
            for p in 0..hw {
                let e = (xd[off + p] - max[p]).exp();
                out[off + p] = e;
                total[p] += e;
            }
        }
        for ch in 0..c {
            let off = base + ch * hw;
            for p in 0..hw {
                out[off + p] /= total[p];
            }
        }
    }
    Ok(Tensor::from_vec(x.shape(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        let s = g.sum_all(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_uniform() {
        let y = softmax_channels(&Tensor::<f32>::full(&[1, 4, 2, 2], 1.7)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn softmax_rejects_single_channel() {
        assert!(softmax_channels(&Tensor::<f32>::ones(&[1, 1, 2, 2])).is_err());
    }

    #[test]
    fn softmax_stable_for_large_logits() {
        let y = softmax_channels(&Tensor::<f32>::from_vec(&[1, 2, 1, 1], vec![1000.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }
}
