//! 2-D convolution (dense, grouped and depthwise) with dilation and stride.
//!
//! Dense convolutions (`groups == 1`) lower each image to a column matrix
//! and run a GEMM. Grouped and depthwise convolutions accumulate one kernel
//! tap at a time: for a fixed offset every valid output row reads a
//! contiguous (or strided) run of an input row. Padding is never
//! materialized in either path.

use rand::Rng;

use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::TensorError;
use crate::tensor::{axpy, dot, MatRef, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding so that the output extent is `ceil(input / stride)`.
    Same,
    Valid,
}

/// Stride, dilation, padding and grouping of a convolution. Kernel size is
/// taken from the weight tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub padding: Padding,
    pub groups: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self { stride: (1, 1), dilation: (1, 1), padding: Padding::Same, groups: 1 }
    }
}

impl ConvSpec {
    pub fn stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = (d, d);
        self
    }

    pub fn padding(mut self, p: Padding) -> Self {
        self.padding = p;
        self
    }

    pub fn groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }
}

/// Weights and configuration of one convolution layer.
#[derive(Clone, Debug)]
pub struct Conv2dParams<T> {
    /// `(out_ch, in_ch / groups, kH, kW)`
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub spec: ConvSpec,
}

impl<T: Scalar> Conv2dParams<T> {
    /// Fan-in scaled uniform weights, zero bias.
    pub fn init(in_ch: usize, out_ch: usize, kernel: usize, spec: ConvSpec, bias: bool, rng: &mut impl Rng) -> Self {
        let shape = [out_ch, in_ch / spec.groups, kernel, kernel];
        Self { weight: kaiming_uniform(&shape, rng), bias: bias.then(|| Tensor::zeros(&[out_ch])), spec }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1] * self.spec.groups
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn num_params(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, Tensor::numel)
    }

    /// Records this layer on `g`; weights become gradient leaves.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var, TensorError> {
        let w = g.param(self.weight.clone());
        let b = self.bias.as_ref().map(|b| g.param(b.clone()));
        g.conv2d(x, w, b, self.spec)
    }
}

/// `U(-sqrt(1 / fan_in), sqrt(1 / fan_in))` for a `(out, in, kh, kw)` weight.
pub fn kaiming_uniform<T: Scalar>(shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data)
}

/// Per-axis geometry of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Axis {
    pub input: usize,
    pub output: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl Axis {
    pub fn new(
        input: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: Padding,
    ) -> Result<Self, TensorError> {
        let extent = (kernel - 1) * dilation + 1;
        let (output, pad) = match padding {
            Padding::Same => {
                let output = input.div_ceil(stride);
                let total = ((output - 1) * stride + extent).saturating_sub(input);
                (output, total / 2)
            }
            Padding::Valid => {
                if extent > input {
                    return Err(TensorError::KernelTooLarge { extent, input });
                }
                ((input - extent) / stride + 1, 0)
            }
        };
        Ok(Self { input, output, kernel, stride, dilation, pad })
    }

    /// For kernel tap `k`: the output range whose sampled input index is in
    /// bounds, and the input index sampled by the first output in that range.
    #[inline]
    pub fn tap(&self, k: usize) -> (usize, usize, usize) {
        let off = k * self.dilation;
        let lo = if self.pad > off { (self.pad - off).div_ceil(self.stride) } else { 0 };
        let last = self.input - 1 + self.pad;
        let hi = if last < off { 0 } else { ((last - off) / self.stride + 1).min(self.output) };
        if lo >= hi {
            return (0, 0, 0);
        }
        (lo, hi, lo * self.stride + off - self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    groups: usize,
    y: Axis,
    x: Axis,
}

impl Geometry {
    fn new(x: &[usize], w: &[usize], spec: ConvSpec) -> Result<Self, TensorError> {
        let [b, c, h, wd] =
            <[usize; 4]>::try_from(x).map_err(|_| TensorError::Rank { expected: 4, actual: x.to_vec() })?;
        let [oc, icg, kh, kw] =
            <[usize; 4]>::try_from(w).map_err(|_| TensorError::Rank { expected: 4, actual: w.to_vec() })?;
        let g = spec.groups;
        if g == 0 || c % g != 0 || oc % g != 0 {
            return Err(TensorError::InvalidConfig(format!("groups {g} must divide in_ch {c} and out_ch {oc}")));
        }
        if icg * g != c {
            return Err(TensorError::ChannelMismatch { op: "conv2d", expected: icg * g, actual: c });
        }
        if spec.stride.0 == 0 || spec.stride.1 == 0 || spec.dilation.0 == 0 || spec.dilation.1 == 0 {
            return Err(TensorError::InvalidConfig("stride and dilation must be positive".into()));
        }
        Ok(Self {
            batch: b,
            in_ch: c,
            out_ch: oc,
            groups: g,
            y: Axis::new(h, kh, spec.stride.0, spec.dilation.0, spec.padding)?,
            x: Axis::new(wd, kw, spec.stride.1, spec.dilation.1, spec.padding)?,
        })
    }

    fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    fn in_plane(&self) -> usize {
        self.y.input * self.x.input
    }

    fn out_plane(&self) -> usize {
        self.y.output * self.x.output
    }

    fn is_pointwise(&self) -> bool {
        self.y.kernel == 1
            && self.x.kernel == 1
            && self.y.stride == 1
            && self.x.stride == 1
            && self.y.pad == 0
            && self.x.pad == 0
    }

    /// Calls `f(oy, iy, ox_lo, ox_hi, ix0)` for every valid row segment of tap (ky, kx).
    #[inline]
    fn for_each_row(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let (oy_lo, oy_hi, iy0) = self.y.tap(ky);
        let (ox_lo, ox_hi, ix0) = self.x.tap(kx);
        if ox_lo >= ox_hi {
            return;
        }
        for (n, oy) in (oy_lo..oy_hi).enumerate() {
            f(oy, iy0 + n * self.y.stride, ox_lo, ox_hi, ix0);
        }
    }
}

/// Writes the `(C·kH·kW) × (Ho·Wo)` column matrix of one image into `col`.
fn im2col<T: Scalar>(geo: &Geometry, x: &[T], col: &mut [T]) {
    let (kh, kw) = (geo.y.kernel, geo.x.kernel);
    let (wi, wo, sx) = (geo.x.input, geo.x.output, geo.x.stride);
    let (ip, op) = (geo.in_plane(), geo.out_plane());
    col.fill(T::zero());
    for ci in 0..geo.in_ch {
        let src = &x[ci * ip..][..ip];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut col[((ci * kh + ky) * kw + kx) * op..][..op];
                geo.for_each_row(ky, kx, |oy, iy, lo, hi, ix0| {
                    let dst = &mut row[oy * wo + lo..oy * wo + hi];
                    let line = &src[iy * wi..(iy + 1) * wi];
                    if sx == 1 {
                        dst.copy_from_slice(&line[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            *d = line[ix0 + j * sx];
                        }
                    }
                });
            }
        }
    }
}

/// Scatter-adds a column matrix back onto one image.
fn col2im<T: Scalar>(geo: &Geometry, col: &[T], x: &mut [T]) {
    let (kh, kw) = (geo.y.kernel, geo.x.kernel);
    let (wi, wo, sx) = (geo.x.input, geo.x.output, geo.x.stride);
    let (ip, op) = (geo.in_plane(), geo.out_plane());
    for ci in 0..geo.in_ch {
        let dst = &mut x[ci * ip..][..ip];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &col[((ci * kh + ky) * kw + kx) * op..][..op];
                geo.for_each_row(ky, kx, |oy, iy, lo, hi, ix0| {
                    let src = &row[oy * wo + lo..oy * wo + hi];
                    let line = &mut dst[iy * wi..(iy + 1) * wi];
                    if sx == 1 {
                        for (d, &v) in line[ix0..ix0 + (hi - lo)].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (j, &v) in src.iter().enumerate() {
                            line[ix0 + j * sx] += v;
                        }
                    }
                });
            }
        }
    }
}

/// Column matrix of image `b`: borrowed directly for 1×1 stride-1 kernels.
fn columns<'a, T: Scalar>(geo: &Geometry, x: &'a [T], b: usize, buf: &'a mut Vec<T>) -> &'a [T] {
    let ip = geo.in_plane();
    let image = &x[b * geo.in_ch * ip..][..geo.in_ch * ip];
    if geo.is_pointwise() {
        return image;
    }
    buf.resize(geo.in_ch * geo.y.kernel * geo.x.kernel * geo.out_plane(), T::zero());
    im2col(geo, image, buf);
    buf
}

fn dense_forward<T: Scalar>(geo: &Geometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let op = geo.out_plane();
    let k = geo.in_ch * geo.y.kernel * geo.x.kernel;
    let mut out = vec![T::zero(); geo.batch * geo.out_ch * op];
    let mut buf = Vec::new();
    for b in 0..geo.batch {
        let col = columns(geo, x, b, &mut buf);
        let dst = &mut out[b * geo.out_ch * op..][..geo.out_ch * op];
        T::gemm(geo.out_ch, k, op, MatRef::row_major(w, k), MatRef::row_major(col, op), T::zero(), dst);
        if let Some(bias) = bias {
            for (plane, &bv) in dst.chunks_exact_mut(op).zip(bias) {
                plane.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

fn dense_backward<T: Scalar>(
    geo: &Geometry,
    x: &[T],
    w: &[T],
    gout: &[T],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let (ip, op) = (geo.in_plane(), geo.out_plane());
    let k = geo.in_ch * geo.y.kernel * geo.x.kernel;
    let mut gx = need_x.then(|| vec![T::zero(); geo.batch * geo.in_ch * ip]);
    let mut gw = need_w.then(|| vec![T::zero(); geo.out_ch * k]);
    let mut buf = Vec::new();
    let mut gcol = Vec::new();
    for b in 0..geo.batch {
        let go = &gout[b * geo.out_ch * op..][..geo.out_ch * op];
        if let Some(gw) = gw.as_mut() {
            let col = columns(geo, x, b, &mut buf);
            T::gemm(geo.out_ch, op, k, MatRef::row_major(go, op), MatRef::transposed(col, op), T::one(), gw);
        }
        if let Some(gx) = gx.as_mut() {
            let dst = &mut gx[b * geo.in_ch * ip..][..geo.in_ch * ip];
            let wt = MatRef::transposed(w, k);
            if geo.is_pointwise() {
                T::gemm(k, geo.out_ch, op, wt, MatRef::row_major(go, op), T::zero(), dst);
            } else {
                gcol.resize(k * op, T::zero());
                T::gemm(k, geo.out_ch, op, wt, MatRef::row_major(go, op), T::zero(), &mut gcol);
                col2im(geo, &gcol, dst);
            }
        }
    }
    (gx, gw)
}

fn grouped_forward<T: Scalar>(geo: &Geometry, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let (ip, op) = (geo.in_plane(), geo.out_plane());
    let (icg, ocg) = (geo.in_per_group(), geo.out_per_group());
    let (kh, kw) = (geo.y.kernel, geo.x.kernel);
    let (wi, wo, sx) = (geo.x.input, geo.x.output, geo.x.stride);
    let mut out = vec![T::zero(); geo.batch * geo.out_ch * op];
    for b in 0..geo.batch {
        for co in 0..geo.out_ch {
            let grp = co / ocg;
            let plane = &mut out[(b * geo.out_ch + co) * op..][..op];
            if let Some(bias) = bias {
                plane.fill(bias[co]);
            }
            for cl in 0..icg {
                let ci = grp * icg + cl;
                let src = &x[(b * geo.in_ch + ci) * ip..][..ip];
                let wbase = (co * icg + cl) * kh * kw;
                if geo.is_pointwise() {
                    axpy(w[wbase], src, plane);
                    continue;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = w[wbase + ky * kw + kx];
                        geo.for_each_row(ky, kx, |oy, iy, lo, hi, ix0| {
                            let dst = &mut plane[oy * wo + lo..oy * wo + hi];
                            let row = &src[iy * wi..(iy + 1) * wi];
                            if sx == 1 {
                                axpy(wv, &row[ix0..ix0 + (hi - lo)], dst);
                            } else {
                                for (j, d) in dst.iter_mut().enumerate() {
                                    *d += wv * row[ix0 + j * sx];
                                }
                            }
                        });
                    }
                }
            }
        }
    }
    out
}

fn input_grad_kernel<T: Scalar>(geo: &Geometry, w: &[T], gout: &[T]) -> Vec<T> {
    let (ip, op) = (geo.in_plane(), geo.out_plane());
    let (icg, ocg) = (geo.in_per_group(), geo.out_per_group());
    let (kh, kw) = (geo.y.kernel, geo.x.kernel);
    let (wi, wo, sx) = (geo.x.input, geo.x.output, geo.x.stride);
    let mut gin = vec![T::zero(); geo.batch * geo.in_ch * ip];
    for b in 0..geo.batch {
        for ci in 0..geo.in_ch {
            let grp = ci / icg;
            let cl = ci % icg;
            let dst = &mut gin[(b * geo.in_ch + ci) * ip..][..ip];
            for ol in 0..ocg {
                let co = grp * ocg + ol;
                let go = &gout[(b * geo.out_ch + co) * op..][..op];
                let wbase = (co * icg + cl) * kh * kw;
                if geo.is_pointwise() {
                    axpy(w[wbase], go, dst);
                    continue;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = w[wbase + ky * kw + kx];
                        geo.for_each_row(ky, kx, |oy, iy, lo, hi, ix0| {
                            let src = &go[oy * wo + lo..oy * wo + hi];
                            let row = &mut dst[iy * wi..(iy + 1) * wi];
                            if sx == 1 {
                                axpy(wv, src, &mut row[ix0..ix0 + (hi - lo)]);
                            } else {
                                for (j, &s) in src.iter().enumerate() {
                                    row[ix0 + j * sx] += wv * s;
                                }
                            }
                        });
                    }
                }
            }
        }
    }
    gin
}

fn weight_grad_kernel<T: Scalar>(geo: &Geometry, x: &[T], gout: &[T], wlen: usize) -> Vec<T> {
    let (ip, op) = (geo.in_plane(), geo.out_plane());
    let (icg, ocg) = (geo.in_per_group(), geo.out_per_group());
    let (kh, kw) = (geo.y.kernel, geo.x.kernel);
    let (wi, wo, sx) = (geo.x.input, geo.x.output, geo.x.stride);
    let mut gw = vec![T::zero(); wlen];
    for b in 0..geo.batch {
        for co in 0..geo.out_ch {
            let grp = co / ocg;
            let go = &gout[(b * geo.out_ch + co) * op..][..op];
            for cl in 0..icg {
                let ci = grp * icg + cl;
                let src = &x[(b * geo.in_ch + ci) * ip..][..ip];
                let wbase = (co * icg + cl) * kh * kw;
                if geo.is_pointwise() {
                    gw[wbase] += dot(go, src);
                    continue;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = T::zero();
                        geo.for_each_row(ky, kx, |oy, iy, lo, hi, ix0| {
                            let g = &go[oy * wo + lo..oy * wo + hi];
                            let row = &src[iy * wi..(iy + 1) * wi];
                            if sx == 1 {
                                acc += dot(g, &row[ix0..ix0 + (hi - lo)]);
                            } else {
                                for (j, &gv) in g.iter().enumerate() {
                                    acc += gv * row[ix0 + j * sx];
                                }
                            }
                        });
                        gw[wbase + ky * kw + kx] += acc;
                    }
                }
            }
        }
    }
    gw
}

struct ConvRule {
    geo: Geometry,
}

impl<T: Scalar> Backward<T> for ConvRule {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let g = ctx.grad.data();
        let (gx, gw) = if self.geo.groups == 1 {
            dense_backward(&self.geo, x.data(), w.data(), g, ctx.needs[0], ctx.needs[1])
        } else {
            (
                ctx.needs[0].then(|| input_grad_kernel(&self.geo, w.data(), g)),
                ctx.needs[1].then(|| weight_grad_kernel(&self.geo, x.data(), g, w.numel())),
            )
        };
        let mut out = vec![gx.map(|d| Tensor::from_vec(x.shape(), d)), gw.map(|d| Tensor::from_vec(w.shape(), d))];
        if ctx.inputs.len() == 3 {
            let op = self.geo.out_plane();
            out.push(ctx.needs[2].then(|| {
                let mut gb = vec![T::zero(); self.geo.out_ch];
                for b in 0..self.geo.batch {
                    for (co, acc) in gb.iter_mut().enumerate() {
                        *acc += g[(b * self.geo.out_ch + co) * op..][..op].iter().copied().sum();
                    }
                }
                Tensor::from_vec(&[self.geo.out_ch], gb)
            }));
        }
        out
    }
}

impl<T: Scalar> Graph<T> {
    /// `x: (B, C, H, W)`, `w: (O, C / groups, kH, kW)`, `bias: (O)`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var, TensorError> {
        let geo = Geometry::new(self.shape(x), self.shape(w), spec)?;
        if let Some(b) = bias {
            if self.shape(b) != [geo.out_ch] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: vec![geo.out_ch],
                    rhs: self.shape(b).to_vec(),
                });
            }
        }
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        let bd = bias.map(|b| self.value(b).data());
        let out = if geo.groups == 1 { dense_forward(&geo, xd, wd, bd) } else { grouped_forward(&geo, xd, wd, bd) };
        let value = Tensor::from_vec(&[geo.batch, geo.out_ch, geo.y.output, geo.x.output], out);
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        Ok(self.record(value, inputs, Box::new(ConvRule { geo })))
    }

    /// Depthwise convolution (`groups == C`) followed by a 1×1 pointwise one.
    pub fn separable_conv2d(
        &mut self,
        x: Var,
        depthwise: Var,
        pointwise: Var,
        spec: ConvSpec,
    ) -> Result<Var, TensorError> {
        let c = self.shape(x).get(1).copied().unwrap_or(0);
        let dw_out = self.shape(depthwise)[0];
        if dw_out != c {
            return Err(TensorError::ChannelMismatch { op: "separable_conv2d", expected: c, actual: dw_out });
        }
        let h = self.conv2d(x, depthwise, None, spec.groups(c))?;
        self.conv2d(h, pointwise, None, ConvSpec::default())
    }
}

/// Depthwise + pointwise pair.
#[derive(Clone, Debug)]
pub struct SeparableConv2dParams<T> {
    pub depthwise: Conv2dParams<T>,
    pub pointwise: Conv2dParams<T>,
}

impl<T: Scalar> SeparableConv2dParams<T> {
    pub fn init(in_ch: usize, out_ch: usize, spec: ConvSpec, rng: &mut impl Rng) -> Self {
        Self {
            depthwise: Conv2dParams::init(in_ch, in_ch, 3, spec.groups(in_ch), false, rng),
            pointwise: Conv2dParams::init(in_ch, out_ch, 1, ConvSpec::default(), false, rng),
        }
    }

    pub fn num_params(&self) -> usize {
        self.depthwise.num_params() + self.pointwise.num_params()
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var, TensorError> {
        let dw = g.param(self.depthwise.weight.clone());
        let pw = g.param(self.pointwise.weight.clone());
        g.separable_conv2d(x, dw, pw, self.depthwise.spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_padding_sizes() {
        let a = Axis::new(128, 3, 2, 1, Padding::Same).unwrap();
        assert_eq!((a.output, a.pad), (64, 0));
        let a = Axis::new(7, 3, 1, 2, Padding::Same).unwrap();
        assert_eq!((a.output, a.pad), (7, 2));
        let a = Axis::new(5, 3, 1, 2, Padding::Valid).unwrap();
        assert_eq!(a.output, 1);
        assert!(matches!(Axis::new(4, 3, 1, 2, Padding::Valid), Err(TensorError::KernelTooLarge { .. })));
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f32> = (0..2 * 3 * 5 * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut w = vec![0.0f32; 3 * 3 * 9];
        for c in 0..3 {
            w[(c * 3 + c) * 9 + 4] = 1.0;
        }
        let mut g = Graph::<f32>::new();
        let xv = g.constant(Tensor::from_vec(&[2, 3, 5, 6], x.clone()));
        let wv = g.constant(Tensor::from_vec(&[3, 3, 3, 3], w));
        let y = g.conv2d(xv, wv, None, ConvSpec::default()).unwrap();
        assert_eq!(g.value(y).data(), &x[..]);
    }

    #[test]
    fn dilated_valid_sums_field() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::ones(&[1, 1, 5, 5]));
        let w = g.constant(Tensor::ones(&[1, 1, 3, 3]));
        let y = g.conv2d(x, w, None, ConvSpec::default().dilation(2).padding(Padding::Valid)).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).item(), 9.0);
    }

    #[test]
    fn channel_mismatch() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::ones(&[1, 2, 5, 5]));
        let w = g.constant(Tensor::ones(&[1, 3, 3, 3]));
        assert!(matches!(g.conv2d(x, w, None, ConvSpec::default()), Err(TensorError::ChannelMismatch { .. })));
    }

    #[test]
    fn separable_param_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = SeparableConv2dParams::<f32>::init(8, 16, ConvSpec::default(), &mut rng);
        assert_eq!(p.num_params(), 72 + 128);
        let dense = Conv2dParams::<f32>::init(8, 16, 3, ConvSpec::default(), false, &mut rng);
        assert_eq!(dense.num_params(), 1152);
    }

    #[test]
    fn separable_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = 4;
        let x: Vec<f64> = (0..c * 36).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dw = vec![0.0; c * 9];
        for ch in 0..c {
            dw[ch * 9 + 4] = 1.0;
        }
        let mut pw = vec![0.0; c * c];
        for ch in 0..c {
            pw[ch * c + ch] = 1.0;
        }
        let mut g = Graph::<f64>::new();
        let xv = g.constant(Tensor::from_vec(&[1, c, 6, 6], x.clone()));
        let d = g.constant(Tensor::from_vec(&[c, 1, 3, 3], dw));
        let p = g.constant(Tensor::from_vec(&[c, c, 1, 1], pw));
        let y = g.separable_conv2d(xv, d, p, ConvSpec::default()).unwrap();
        assert_eq!(g.value(y).data(), &x[..]);
    }
}
