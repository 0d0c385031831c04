use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

/// Interpolation taps along one axis (half-pixel centers, edge clamped).
#[derive(Clone, Debug)]
pub(crate) struct LerpAxis {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub frac: Vec<f64>,
}

impl LerpAxis {
    pub fn new(input: usize, output: usize) -> Self {
        let scale = input as f64 / output as f64;
        let mut lo = Vec::with_capacity(output);
        let mut hi = Vec::with_capacity(output);
        let mut frac = Vec::with_capacity(output);
        for o in 0..output {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let l = src.floor() as usize;
            lo.push(l);
            hi.push((l + 1).min(input - 1));
            frac.push(src - l as f64);
        }
        Self { lo, hi, frac }
    }
}

/// Bilinear resampling of an `h × w` plane into `oh × ow`. Each tap is
/// computed as `a + f·(b − a)` so constant regions are reproduced exactly.
pub(crate) fn resize_plane<T: Scalar>(src: &[T], w: usize, ya: &LerpAxis, xa: &LerpAxis, out: &mut Vec<T>) {
    let ow = xa.lo.len();
    let fx: Vec<T> = xa.frac.iter().map(|&f| T::lit(f)).collect();
    let mut top = vec![T::zero(); ow];
    let mut bot = vec![T::zero(); ow];
    for oy in 0..ya.lo.len() {
        let r0 = &src[ya.lo[oy] * w..][..w];
        let r1 = &src[ya.hi[oy] * w..][..w];
        for ox in 0..ow {
            let (l, h) = (xa.lo[ox], xa.hi[ox]);
            top[ox] = r0[l] + fx[ox] * (r0[h] - r0[l]);
            bot[ox] = r1[l] + fx[ox] * (r1[h] - r1[l]);
        }
        let fy = T::lit(ya.frac[oy]);
        out.extend(top.iter().zip(&bot).map(|(&t, &b)| t + fy * (b - t)));
    }
}

/// Bilinear resampling of a row-major `h × w` plane to `oh × ow`, with the
/// same sampling grid as [`Graph::bilinear_resize`].
pub fn resize_bilinear<T: Scalar>(src: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w, "plane size");
    if (oh, ow) == (h, w) {
        return src.to_vec();
    }
    let mut out = Vec::with_capacity(oh * ow);
    resize_plane(src, w, &LerpAxis::new(h, oh), &LerpAxis::new(w, ow), &mut out);
    out
}

struct ResizeRule {
    ya: LerpAxis,
    xa: LerpAxis,
}

impl<T: Scalar> Backward<T> for ResizeRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let input = ctx.inputs[0];
        let [b, c, h, w] = input.dims4().expect("rank 4");
        let (oh, ow) = (self.ya.lo.len(), self.xa.lo.len());
        let g = ctx.grad.data();
        let mut gin = vec![T::zero(); input.numel()];
        for plane in 0..b * c {
            let dst = &mut gin[plane * h * w..][..h * w];
            let src = &g[plane * oh * ow..][..oh * ow];
            for oy in 0..oh {
                let fy = T::lit(self.ya.frac[oy]);
                let (y0, y1) = (self.ya.lo[oy], self.ya.hi[oy]);
                for ox in 0..ow {
                    let fx = T::lit(self.xa.frac[ox]);
                    let (x0, x1) = (self.xa.lo[ox], self.xa.hi[ox]);
                    let gv = src[oy * ow + ox];
                    let top = gv * (T::one() - fy);
                    let bot = gv * fy;
                    dst[y0 * w + x0] += top * (T::one() - fx);
                    dst[y0 * w + x1] += top * fx;
                    dst[y1 * w + x0] += bot * (T::one() - fx);
                    dst[y1 * w + x1] += bot * fx;
                }
            }
        }
        vec![Some(Tensor::from_vec(input.shape(), gin))]
    }
}

impl<T: Scalar> Graph<T> {
    /// Bilinear resize of `(B, C, H, W)` to `(B, C, oh, ow)`.
    pub fn bilinear_resize(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var, TensorError> {
        let [b, c, h, w] = self.value(x).dims4()?;
        if oh == 0 || ow == 0 {
            return Err(TensorError::InvalidShape(vec![b, c, oh, ow]));
        }
        let ya = LerpAxis::new(h, oh);
        let xa = LerpAxis::new(w, ow);
        let value = if (oh, ow) == (h, w) {
            self.value(x).clone()
        } else {
            let src = self.value(x).data();
            let mut out = Vec::with_capacity(b * c * oh * ow);
            for plane in 0..b * c {
                resize_plane(&src[plane * h * w..][..h * w], w, &ya, &xa, &mut out);
            }
            Tensor::from_vec(&[b, c, oh, ow], out)
        };
        Ok(self.record(value, vec![x], Box::new(ResizeRule { ya, xa })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_bit_identity() {
        let data: Vec<f32> = (0..30).map(|i| (i as f32 * 0.37).sin()).collect();
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_vec(&[1, 2, 3, 5], data.clone()));
        let y = g.bilinear_resize(x, 3, 5).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);
    }

    #[test]
    fn constant_is_preserved() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::full(&[1, 1, 5, 7], 0.3));
        for (oh, ow) in [(1, 1), (10, 14), (13, 3), (64, 64)] {
            let y = g.bilinear_resize(x, oh, ow).unwrap();
            assert!(g.value(y).data().iter().all(|&v| v == 0.3));
            let back = g.bilinear_resize(y, 5, 7).unwrap();
            assert!(g.value(back).data().iter().all(|&v| v == 0.3));
        }
    }
}
