//! Direct, loop-based reference implementations.

use csegnet::nn::{ConvSpec, Padding};
use csegnet::{Tensor, Volume};

/// Output extent and leading pad of one convolution axis.
pub fn conv_axis(input: usize, kernel: usize, stride: usize, dilation: usize, padding: Padding) -> (usize, usize) {
    let extent = (kernel - 1) * dilation + 1;
    match padding {
        Padding::Valid => ((input - extent) / stride + 1, 0),
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = (out - 1) * stride + extent;
            (out, needed.saturating_sub(input) / 2)
        }
    }
}

/// Direct seven-loop convolution.
pub fn conv2d(x: &Tensor<f64>, w: &Tensor<f64>, bias: Option<&Tensor<f64>>, spec: ConvSpec) -> Tensor<f64> {
    let [b, c, h, wd] = x.dims4().unwrap();
    let [o, cg, kh, kw] = w.dims4().unwrap();
    let g = spec.groups;
    assert_eq!(cg * g, c);
    let og = o / g;
    let (oh, ph) = conv_axis(h, kh, spec.stride.0, spec.dilation.0, spec.padding);
    let (ow, pw) = conv_axis(wd, kw, spec.stride.1, spec.dilation.1, spec.padding);
    let mut out = vec![0.0; b * o * oh * ow];
    for bi in 0..b {
        for oc in 0..o {
            let grp = oc / og;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |t| t.data()[oc]);
                    for ic in 0..cg {
                        let c_in = grp * cg + ic;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * spec.stride.0 + ky * spec.dilation.0) as isize - ph as isize;
                                let ix = (ox * spec.stride.1 + kx * spec.dilation.1) as isize - pw as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()[((bi * c + c_in) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((oc * cg + ic) * kh + ky) * kw + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((bi * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[b, o, oh, ow], out)
}

/// Generalized Dice loss over flat `(B, N, H, W)` buffers, one scalar at a time.
pub fn gdl(p: &[f64], r: &[f64], b: usize, n: usize, hw: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for l in 0..n {
        let mut count = 0.0;
        for bi in 0..b {
            for i in 0..hw {
                count += r[(bi * n + l) * hw + i];
            }
        }
        let count = f64::max(count, 1e-6);
        let omega = 1.0 / (count * count);
        let (mut inter, mut total) = (0.0, 0.0);
        for bi in 0..b {
            for i in 0..hw {
                let k = (bi * n + l) * hw + i;
                inter += r[k] * p[k];
                total += r[k] + p[k];
            }
        }
        num += omega * inter;
        den += omega * total;
    }
    1.0 - 2.0 * num / den
}

pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// Boundary voxels: set voxels touching the volume edge or an unset
/// six-neighbor.
fn boundary_points(m: &Volume<bool>) -> Vec<[usize; 3]> {
    let [d, h, w] = m.dims();
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                if !m.get(z, y, x) {
                    continue;
                }
                let p = [z as isize, y as isize, x as isize];
                let dims = [d as isize, h as isize, w as isize];
                let mut open = false;
                for axis in 0..3 {
                    for step in [-1, 1] {
                        let mut q = p;
                        q[axis] += step;
                        if q[axis] < 0 || q[axis] >= dims[axis] || !m.get(q[0] as usize, q[1] as usize, q[2] as usize) {
                            open = true;
                        }
                    }
                }
                if open {
                    out.push([z, y, x]);
                }
            }
        }
    }
    out
}

/// Symmetric Hausdorff distance by exhaustive pairwise search.
pub fn hausdorff(a: &Volume<bool>, b: &Volume<bool>, spacing: [f64; 3]) -> Option<f64> {
    let (pa, pb) = (boundary_points(a), boundary_points(b));
    if pa.is_empty() || pb.is_empty() {
        return None;
    }
    let dist = |p: &[usize; 3], q: &[usize; 3]| {
        (0..3).map(|i| ((p[i] as f64 - q[i] as f64) * spacing[i]).powi(2)).sum::<f64>().sqrt()
    };
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        from.iter().map(|p| to.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    Some(directed(&pa, &pb).max(directed(&pb, &pa)))
}

/// Pearson correlation and mean difference, two-pass.
pub fn pearson_and_bias(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let bias = x.iter().zip(y).map(|(a, b)| a - b).sum::<f64>() / n;
    (sxy / (sxx * syy).sqrt(), bias)
}

/// Input, weight and spec of one convolution case.
pub struct ConvCase {
    pub x: Tensor<f64>,
    pub w: Tensor<f64>,
    pub bias: Tensor<f64>,
    pub spec: ConvSpec,
}

/// `n` random cases cycling through every combination of stride {1, 2},
/// dilation {1, 2}, both paddings and groups {1, in_ch}.
pub fn conv_cases(n: usize, seed: u64) -> Vec<ConvCase> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let random = |shape: &[usize], rng: &mut rand_chacha::ChaCha8Rng| {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    (0..n)
        .map(|i| {
            let stride = 1 + (i & 1);
            let dilation = 1 + ((i >> 1) & 1);
            let padding = if (i >> 2) & 1 == 0 { Padding::Same } else { Padding::Valid };
            let depthwise = (i >> 3) & 1 == 1;
            let c = rng.gen_range(1..=4);
            let k = [1, 3, 3, 5][rng.gen_range(0..4)];
            let extent = (k - 1) * dilation + 1;
            let h = rng.gen_range(extent.max(3)..extent + 9);
            let w = rng.gen_range(extent.max(3)..extent + 9);
            let (groups, out) = if depthwise { (c, c * rng.gen_range(1..=2)) } else { (1, rng.gen_range(1..=5)) };
            let b = rng.gen_range(1..=2);
            let spec = ConvSpec::default().stride(stride).dilation(dilation).padding(padding).groups(groups);
            ConvCase {
                x: random(&[b, c, h, w], &mut rng),
                w: random(&[out, c / groups, k, k], &mut rng),
                bias: random(&[out], &mut rng),
                spec,
            }
        })
        .collect()
}
