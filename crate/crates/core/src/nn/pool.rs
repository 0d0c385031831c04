use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

/// Average pooling geometry along one axis: windows start at multiples of
/// `stride`; the last window may hang past the edge.
#[derive(Clone, Copy, Debug)]
struct PoolAxis {
    input: usize,
    output: usize,
    window: usize,
    stride: usize,
}

impl PoolAxis {
    fn new(input: usize, window: usize, stride: usize) -> Self {
        let output = input.saturating_sub(window).div_ceil(stride) + 1;
        Self { input, output, window, stride }
    }

    #[inline]
    fn span(&self, o: usize) -> (usize, usize) {
        let lo = o * self.stride;
        (lo, (lo + self.window).min(self.input))
    }
}

struct AvgPoolRule {
    y: PoolAxis,
    x: PoolAxis,
}

impl<T: Scalar> Backward<T> for AvgPoolRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let input = ctx.inputs[0];
        let [b, c, h, w] = input.dims4().expect("rank 4");
        let (oh, ow) = (self.y.output, self.x.output);
        let g = ctx.grad.data();
        let mut gin = vec![T::zero(); input.numel()];
        for plane in 0..b * c {
            let dst = &mut gin[plane * h * w..][..h * w];
            let src = &g[plane * oh * ow..][..oh * ow];
            for oy in 0..oh {
                let (y0, y1) = self.y.span(oy);
                for ox in 0..ow {
                    let (x0, x1) = self.x.span(ox);
                    let share = src[oy * ow + ox] / T::lit(((y1 - y0) * (x1 - x0)) as f64);
                    for yy in y0..y1 {
                        for v in &mut dst[yy * w + x0..yy * w + x1] {
                            *v += share;
                        }
                    }
                }
            }
        }
        vec![Some(Tensor::from_vec(input.shape(), gin))]
    }
}

impl<T: Scalar> Graph<T> {
    /// Mean over `window × window` tiles with the given stride. Tiles that
    /// extend past the border average only the pixels they cover.
    pub fn avg_pool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var, TensorError> {
        let [b, c, h, w] = self.value(x).dims4()?;
        if h < window || w < window {
            return Err(TensorError::InputTooSmall { op: "avg_pool2d", h, w, min: window });
        }
        let ya = PoolAxis::new(h, window, stride);
        let xa = PoolAxis::new(w, window, stride);
        let (oh, ow) = (ya.output, xa.output);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        for plane in 0..b * c {
            let p = &src[plane * h * w..][..h * w];
            for oy in 0..oh {
                let (y0, y1) = ya.span(oy);
                for ox in 0..ow {
                    let (x0, x1) = xa.span(ox);
                    let mut s = T::zero();
                    for yy in y0..y1 {
                        for &v in &p[yy * w + x0..yy * w + x1] {
                            s += v;
                        }
                    }
                    out.push(s / T::lit(((y1 - y0) * (x1 - x0)) as f64));
                }
            }
        }
        let value = Tensor::from_vec(&[b, c, oh, ow], out);
        Ok(self.record(value, vec![x], Box::new(AvgPoolRule { y: ya, x: xa })))
    }
}
