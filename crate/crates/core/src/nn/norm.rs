use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Learnable affine parameters and running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    /// Records the layer. In training mode the running statistics are updated.
    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, training: bool) -> Result<(Var, Var, Var), TensorError> {
        let gamma = g.param(self.gamma.clone());
        let beta = g.param(self.beta.clone());
        let mode = if training {
            NormMode::Batch
        } else {
            NormMode::Running { mean: &self.running_mean, var: &self.running_var }
        };
        let (y, stats) = g.batch_norm(x, gamma, beta, mode, self.epsilon)?;
        if let Some(stats) = stats {
            stats.update(&mut self.running_mean, &mut self.running_var, self.momentum);
        }
        Ok((y, gamma, beta))
    }
}

pub enum NormMode<'a, T> {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Normalize with stored statistics.
    Running { mean: &'a Tensor<T>, var: &'a Tensor<T> },
}

/// Per-channel batch statistics produced in training mode.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance estimate, as folded into the running average.
    pub var_unbiased: Vec<T>,
}

impl<T: Scalar> BatchStats<T> {
    /// `running ← momentum · running + (1 − momentum) · batch`.
    pub fn update(&self, running_mean: &mut Tensor<T>, running_var: &mut Tensor<T>, momentum: f64) {
        let m = T::lit(momentum);
        let one_m = T::lit(1.0 - momentum);
        for (r, &b) in running_mean.data_mut().iter_mut().zip(&self.mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in running_var.data_mut().iter_mut().zip(&self.var_unbiased) {
            *r = m * *r + one_m * b;
        }
    }
}

struct BatchNormRule<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

impl<T: Scalar> Backward<T> for BatchNormRule<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let x = ctx.inputs[0];
        let gamma = ctx.inputs[1].data();
        let [b, c, h, w] = x.dims4().expect("rank 4");
        let hw = h * w;
        let n = T::lit((b * hw) as f64);
        let g = ctx.grad.data();
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for bi in 0..b {
            for (ch, (sg, sgx)) in sum_g.iter_mut().zip(sum_gx.iter_mut()).enumerate() {
                let off = (bi * c + ch) * hw;
                for (&gv, &xh) in g[off..off + hw].iter().zip(&self.xhat[off..off + hw]) {
                    *sg += gv;
                    *sgx += gv * xh;
                }
            }
        }
        let gx = ctx.needs[0].then(|| {
            let mut out = vec![T::zero(); x.numel()];
            for bi in 0..b {
                for ch in 0..c {
                    let off = (bi * c + ch) * hw;
                    let k = gamma[ch] * self.inv_std[ch];
                    let dst = &mut out[off..off + hw];
                    let (gs, xs) = (&g[off..off + hw], &self.xhat[off..off + hw]);
                    if self.batch_stats {
                        let (mg, mgx) = (sum_g[ch] / n, sum_gx[ch] / n);
                        for ((d, &gv), &xh) in dst.iter_mut().zip(gs).zip(xs) {
                            *d = k * (gv - mg - xh * mgx);
                        }
                    } else {
                        for (d, &gv) in dst.iter_mut().zip(gs) {
                            *d = k * gv;
                        }
                    }
                }
            }
            Tensor::from_vec(x.shape(), out)
        });
        let ggamma = ctx.needs[1].then(|| Tensor::from_vec(&[c], sum_gx.clone()));
        let gbeta = ctx.needs[2].then(|| Tensor::from_vec(&[c], sum_g.clone()));
        vec![gx, ggamma, gbeta]
    }
}

impl<T: Scalar> Graph<T> {
    /// Per-channel normalization of `(B, C, H, W)` followed by the affine
    /// `gamma · x̂ + beta`. Returns batch statistics in [`NormMode::Batch`].
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_, T>,
        epsilon: f64,
    ) -> Result<(Var, Option<BatchStats<T>>), TensorError> {
        let [b, c, h, w] = self.value(x).dims4()?;
        for (p, name) in [(gamma, "batch_norm gamma"), (beta, "batch_norm beta")] {
            if self.shape(p) != [c] {
                return Err(TensorError::ChannelMismatch { op: name, expected: c, actual: self.shape(p)[0] });
            }
        }
        let hw = h * w;
        let count = b * hw;
        let xd = self.value(x).data();
        let eps = T::lit(epsilon);
        let (mean, var, stats) = match mode {
            NormMode::Batch => {
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for bi in 0..b {
                    for (ch, m) in mean.iter_mut().enumerate() {
                        *m += xd[(bi * c + ch) * hw..][..hw].iter().copied().sum::<T>();
                    }
                }
                let nf = T::lit(count as f64);
                mean.iter_mut().for_each(|m| *m /= nf);
                for bi in 0..b {
                    for (ch, v) in var.iter_mut().enumerate() {
                        let m = mean[ch];
                        *v += xd[(bi * c + ch) * hw..][..hw].iter().map(|&x| (x - m) * (x - m)).sum::<T>();
                    }
                }
                let unbiased_n = T::lit(count.saturating_sub(1).max(1) as f64);
                let var_unbiased = var.iter().map(|&v| v / unbiased_n).collect();
                var.iter_mut().for_each(|v| *v /= nf);
                let stats = BatchStats { mean: mean.clone(), var_unbiased };
                (mean, var, Some(stats))
            }
            NormMode::Running { mean, var } => {
                if mean.numel() != c || var.numel() != c {
                    return Err(TensorError::ChannelMismatch {
                        op: "batch_norm running stats",
                        expected: c,
                        actual: mean.numel(),
                    });
                }
                (mean.data().to_vec(), var.data().to_vec(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let gd = self.value(gamma).data();
        let bd = self.value(beta).data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * hw;
                let (m, s) = (mean[ch], inv_std[ch]);
                for i in off..off + hw {
                    let xh = (xd[i] - m) * s;
                    xhat[i] = xh;
                    out[i] = gd[ch] * xh + bd[ch];
                }
            }
        }
        let value = Tensor::from_vec(&[b, c, h, w], out);
        let rule = BatchNormRule { xhat, inv_std, batch_stats: stats.is_some() };
        Ok((self.record(value, vec![x, gamma, beta], Box::new(rule)), stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-3.0..5.0)).collect())
    }

    #[test]
    fn normalizes_per_channel() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(random(&[3, 2, 4, 5], 4));
        let mut state = BatchNormState::<f64>::new(2);
        let (y, _, _) = state.forward(&mut g, x, true).unwrap();
        let yd = g.value(y).data();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|b| yd[(b * 2 + ch) * 20..][..20].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
        // running stats moved toward the batch statistics
        assert!(state.running_mean.data().iter().all(|&m| m != 0.0));
        assert!(state.running_var.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(random(&[2, 3, 3, 3], 5));
        let gamma = g.constant(Tensor::zeros(&[3]));
        let beta = g.constant(Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]));
        let (y, _) = g.batch_norm(x, gamma, beta, NormMode::Batch, BN_EPSILON).unwrap();
        for (i, &v) in g.value(y).data().iter().enumerate() {
            let ch = (i / 9) % 3;
            assert_eq!(v, [0.5, -1.0, 2.0][ch]);
        }
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 2, 2], 3.0));
        let gamma = g.constant(Tensor::ones(&[1]));
        let beta = g.constant(Tensor::zeros(&[1]));
        let mean = Tensor::scalar(1.0);
        let var = Tensor::scalar(4.0 - 1e-5);
        let (y, stats) = g.batch_norm(x, gamma, beta, NormMode::Running { mean: &mean, var: &var }, 1e-5).unwrap();
        assert!(stats.is_none());
        assert!(g.value(y).data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
