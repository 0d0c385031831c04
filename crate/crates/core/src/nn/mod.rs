//! Neural-network operators recorded on the [`Graph`](crate::autodiff::Graph).
//!
//! All image tensors are `(batch, channel, height, width)`, row-major.

mod activation;
mod conv;
mod norm;
mod pool;
mod resize;

pub use activation::softmax_channels;
pub use conv::{kaiming_uniform, Conv2dParams, ConvSpec, Padding, SeparableConv2dParams};
pub use norm::{BatchNormState, BatchStats, NormMode, BN_EPSILON, BN_MOMENTUM};
pub use resize::resize_bilinear;

use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

struct ConcatRule {
    channels: Vec<usize>,
}

impl<T: Scalar> Backward<T> for ConcatRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let [b, total, h, w] = ctx.grad.dims4().expect("rank 4");
        let hw = h * w;
        let g = ctx.grad.data();
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.channels.len());
        for (i, &c) in self.channels.iter().enumerate() {
            if ctx.needs[i] {
                let mut data = Vec::with_capacity(b * c * hw);
                for bi in 0..b {
                    data.extend_from_slice(&g[(bi * total + offset) * hw..][..c * hw]);
                }
                out.push(Some(Tensor::from_vec(&[b, c, h, w], data)));
            } else {
                out.push(None);
            }
            offset += c;
        }
        out
    }
}

impl<T: Scalar> Graph<T> {
    /// Stacks `(B, Ci, H, W)` tensors along the channel axis in argument order.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        let first = *xs.first().ok_or_else(|| TensorError::InvalidConfig("concat of nothing".into()))?;
        let [b, _, h, w] = self.value(first).dims4()?;
        let mut channels = Vec::with_capacity(xs.len());
        for &x in xs {
            let [xb, xc, xh, xw] = self.value(x).dims4()?;
            if (xb, xh, xw) != (b, h, w) {
                return Err(TensorError::SpatialMismatch { expected: vec![b, h, w], actual: vec![xb, xh, xw] });
            }
            channels.push(xc);
        }
        let total: usize = channels.iter().sum();
        let hw = h * w;
        let mut data = Vec::with_capacity(b * total * hw);
        for bi in 0..b {
            for (&x, &c) in xs.iter().zip(&channels) {
                data.extend_from_slice(&self.value(x).data()[bi * c * hw..][..c * hw]);
            }
        }
        let value = Tensor::from_vec(&[b, total, h, w], data);
        Ok(self.record(value, xs.to_vec(), Box::new(ConcatRule { channels })))
    }
}
