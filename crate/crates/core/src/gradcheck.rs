//! Finite-difference gradient checks of every differentiable operator, in f64,
//! on small random shapes.

use crate::loss::{combined_loss, gdl, one_hot};
use crate::nn::{ConvSpec, NormMode, Padding, BN_EPSILON};
use crate::{autodiff::grad_check, CSegNet, Graph, ModelConfig, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const H: f64 = 1e-3;
/// Largest accepted relative error.
pub const TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradResult {
    pub op: &'static str,
    pub shape: Vec<usize>,
    pub error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Suite {
    pub results: Vec<GradResult>,
}

impl Suite {
    fn check(
        &mut self,
        op: &'static str,
        f: impl Fn(&mut Graph<f64>, Var) -> Result<Var, TensorError>,
        x: &Tensor<f64>,
    ) {
        let error = grad_check(f, x, H).unwrap_or_else(|e| panic!("{op}: {e}"));
        self.results.push(GradResult { op, shape: x.shape().to_vec(), error });
    }

    /// Results whose error reaches the tolerance.
    pub fn failures(&self) -> Vec<&GradResult> {
        self.results.iter().filter(|r| r.error.is_nan() || r.error >= TOL).collect()
    }

    /// Worst error per operator, in first-seen order, with the case count.
    pub fn worst_by_op(&self) -> Vec<(&'static str, usize, f64)> {
        let mut out: Vec<(&'static str, usize, f64)> = Vec::new();
        for r in &self.results {
            match out.iter_mut().find(|(op, _, _)| *op == r.op) {
                Some(entry) => {
                    entry.1 += 1;
                    entry.2 = entry.2.max(r.error);
                }
                None => out.push((r.op, 1, r.error)),
            }
        }
        out
    }
}

/// Uniform values in `[-1, 1)`.
pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Values bounded away from zero so ReLU kinks stay outside the stencil.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random(shape, rng).map(|v| if v >= 0.0 { v + 0.05 } else { v - 0.05 })
}

fn random_labels(b: usize, h: usize, w: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..b * h * w).map(|_| rng.gen_range(0..n) as u8).collect()
}

/// Contracts `y` with a fixed random tensor so every output element matters.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random(g.shape(y), &mut rng));
    let p = g.mul(y, w)?;
    g.sum_all(p)
}

pub fn conv2d(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = [
        ([2, 3, 5, 5], 4, 3, ConvSpec::default()),
        ([1, 2, 7, 6], 3, 3, ConvSpec::default().stride(2)),
        ([2, 2, 6, 7], 2, 3, ConvSpec::default().dilation(2)),
        ([1, 3, 6, 6], 2, 3, ConvSpec::default().padding(Padding::Valid).stride(2)),
        ([2, 4, 5, 4], 4, 3, ConvSpec::default().groups(4)),
        ([1, 4, 8, 8], 4, 3, ConvSpec::default().groups(4).stride(2).dilation(2)),
        ([2, 3, 4, 4], 5, 1, ConvSpec::default()),
    ];
    for (i, (shape, out, k, spec)) in cases.into_iter().enumerate() {
        let seed = i as u64;
        let x = random(&shape, &mut rng);
        let w = random(&[out, shape[1] / spec.groups, k, k], &mut rng);
        let b = random(&[out], &mut rng);
        s.check(
            "conv2d",
            |g, v| {
                let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
                let y = g.conv2d(v, w, Some(b), spec)?;
                project(g, y, seed)
            },
            &x,
        );
        s.check(
            "conv2d",
            |g, v| {
                let x = g.constant(x.clone());
                let y = g.conv2d(x, v, None, spec)?;
                project(g, y, seed)
            },
            &w,
        );
        s.check(
            "conv2d",
            |g, v| {
                let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
                let y = g.conv2d(x, w, Some(v), spec)?;
                project(g, y, seed)
            },
            &b,
        );
    }
}

pub fn separable_conv2d(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases =
        [([1, 2, 5, 5], 3, 1), ([2, 3, 6, 6], 2, 2), ([1, 4, 7, 5], 4, 1), ([2, 2, 8, 8], 5, 2), ([1, 1, 4, 6], 2, 1)];
    for (i, (shape, out, stride)) in cases.into_iter().enumerate() {
        let seed = i as u64;
        let c = shape[1];
        let x = random(&shape, &mut rng);
        let dw = random(&[c, 1, 3, 3], &mut rng);
        let pw = random(&[out, c, 1, 1], &mut rng);
        let spec = ConvSpec::default().stride(stride);
        s.check(
            "separable_conv2d",
            |g, v| {
                let (d, p) = (g.constant(dw.clone()), g.constant(pw.clone()));
                let y = g.separable_conv2d(v, d, p, spec)?;
                project(g, y, seed)
            },
            &x,
        );
        s.check(
            "separable_conv2d",
            |g, v| {
                let (x, p) = (g.constant(x.clone()), g.constant(pw.clone()));
                let y = g.separable_conv2d(x, v, p, spec)?;
                project(g, y, seed)
            },
            &dw,
        );
        s.check(
            "separable_conv2d",
            |g, v| {
                let (x, d) = (g.constant(x.clone()), g.constant(dw.clone()));
                let y = g.separable_conv2d(x, d, v, spec)?;
                project(g, y, seed)
            },
            &pw,
        );
    }
}

pub fn avg_pool2d(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, shape) in [[1, 1, 3, 3], [2, 2, 5, 7], [1, 3, 9, 9], [2, 1, 4, 8], [1, 2, 10, 6]].into_iter().enumerate() {
        let x = random(&shape, &mut rng);
        s.check(
            "avg_pool2d",
            |g, v| {
                let y = g.avg_pool2d(v, 3, 3)?;
                project(g, y, i as u64)
            },
            &x,
        );
    }
}

pub fn bilinear_resize(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cases = [
        ([1, 1, 2, 2], 4, 4),
        ([2, 2, 3, 5], 6, 10),
        ([1, 3, 8, 8], 4, 4),
        ([1, 2, 5, 3], 7, 2),
        ([2, 1, 4, 4], 16, 16),
    ];
    for (i, (shape, oh, ow)) in cases.into_iter().enumerate() {
        let x = random(&shape, &mut rng);
        s.check(
            "bilinear_resize",
            |g, v| {
                let y = g.bilinear_resize(v, oh, ow)?;
                project(g, y, i as u64)
            },
            &x,
        );
    }
}

pub fn batch_norm(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (i, shape) in [[2, 3, 3, 3], [1, 2, 4, 5], [4, 1, 2, 2], [3, 4, 2, 3], [2, 2, 5, 1]].into_iter().enumerate() {
        let seed = i as u64;
        let c = shape[1];
        let x = random(&shape, &mut rng);
        let gamma = random(&[c], &mut rng).map(|v| v + 1.5);
        let beta = random(&[c], &mut rng);
        let mean = random(&[c], &mut rng);
        let var = random(&[c], &mut rng).map(|v| v.abs() + 0.5);
        for training in [true, false] {
            s.check(
                "batch_norm",
                |g, v| {
                    let (ga, be) = (g.constant(gamma.clone()), g.constant(beta.clone()));
                    let mode = if training { NormMode::Batch } else { NormMode::Running { mean: &mean, var: &var } };
                    let (y, _) = g.batch_norm(v, ga, be, mode, BN_EPSILON)?;
                    project(g, y, seed)
                },
                &x,
            );
        }
        s.check(
            "batch_norm",
            |g, v| {
                let (x, be) = (g.constant(x.clone()), g.constant(beta.clone()));
                let (y, _) = g.batch_norm(x, v, be, NormMode::Batch, BN_EPSILON)?;
                project(g, y, seed)
            },
            &gamma,
        );
        s.check(
            "batch_norm",
            |g, v| {
                let (x, ga) = (g.constant(x.clone()), g.constant(gamma.clone()));
                let (y, _) = g.batch_norm(x, ga, v, NormMode::Batch, BN_EPSILON)?;
                project(g, y, seed)
            },
            &beta,
        );
    }
}

pub fn relu(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (i, shape) in [[1, 2, 3, 3], [2, 4, 2, 2], [1, 3, 5, 4], [3, 2, 1, 6], [2, 5, 3, 3]].into_iter().enumerate() {
        let x = away_from_zero(&shape, &mut rng);
        s.check(
            "relu",
            |g, v| {
                let y = g.relu(v)?;
                project(g, y, i as u64)
            },
            &x,
        );
    }
}

pub fn softmax(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (i, shape) in [[1, 2, 3, 3], [2, 4, 2, 2], [1, 3, 5, 4], [3, 2, 1, 6], [2, 5, 3, 3]].into_iter().enumerate() {
        let x = random(&shape, &mut rng).map(|v| 3.0 * v);
        s.check(
            "softmax",
            |g, v| {
                let y = g.softmax_channels(v)?;
                project(g, y, i as u64)
            },
            &x,
        );
    }
}

/// GDL is checked through a softmax so every perturbed input stays a valid
/// probability map.
pub fn gdl_loss(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for [b, n, h, w] in [[1, 2, 4, 4], [2, 4, 3, 3], [1, 3, 4, 5], [2, 2, 3, 4], [1, 4, 6, 6]] {
        let target = one_hot(&random_labels(b, h, w, n, &mut rng), b, n, h, w);
        let logits = random(&[b, n, h, w], &mut rng).map(|v| 2.0 * v);
        s.check(
            "gdl",
            |g, v| {
                let p = g.softmax_channels(v)?;
                gdl(g, p, &target)
            },
            &logits,
        );
    }
}

pub fn combined(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for [b, n, h, w] in [[1, 2, 4, 4], [2, 4, 8, 8], [1, 3, 4, 8], [2, 2, 8, 4], [1, 4, 16, 16]] {
        let target = one_hot(&random_labels(b, h, w, n, &mut rng), b, n, h, w);
        let main = random(&[b, n, h, w], &mut rng);
        let aux1 = random(&[b, n, h / 2, w / 2], &mut rng);
        let aux2 = random(&[b, n, h / 4, w / 4], &mut rng);
        let weights = [1.0, 0.4, 0.2];
        s.check(
            "combined_loss",
            |g, v| {
                let (x1, x2) = (g.constant(aux1.clone()), g.constant(aux2.clone()));
                combined_loss(g, v, &[x1, x2], &target, &weights)
            },
            &main,
        );
        s.check(
            "combined_loss",
            |g, v| {
                let (m, x2) = (g.constant(main.clone()), g.constant(aux2.clone()));
                combined_loss(g, m, &[v, x2], &target, &weights)
            },
            &aux1,
        );
    }
}

/// Training-mode forward of small networks, rooted at the deep-supervision
/// loss, differentiated with respect to the input image.
/// Full model forward plus combined loss, in inference mode with running
/// statistics primed from one training batch.
pub fn model_forward(s: &mut Suite) {
    model_forward_in(s, "model_forward", false);
}

/// The same composite with batch statistics.
pub fn model_forward_training(s: &mut Suite) {
    model_forward_in(s, "model_forward_training", true);
}

fn model_forward_in(s: &mut Suite, op: &'static str, training: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let configs = [(2, 2, 16, 2), (2, 3, 16, 1), (3, 2, 16, 3), (2, 2, 24, 2), (3, 2, 32, 1)];
    for (i, (stages, base, size, batch)) in configs.into_iter().enumerate() {
        let cfg = ModelConfig::with_scale(stages, base, size);
        let mut net = CSegNet::<f64>::build(cfg.clone(), i as u64).expect("valid config");
        let prime = random(&[2, 1, size, size], &mut rng).map(|v| 1.5 * v + 0.3);
        let mut g = Graph::new();
        let pv = g.constant(prime);
        let stats = net.forward(&mut g, pv, true).expect("forward").batch_stats;
        net.apply_batch_stats(&stats);
        let x = random(&[batch, 1, size, size], &mut rng);
        let target = one_hot(&random_labels(batch, size, size, 4, &mut rng), batch, 4, size, size);
        s.check(
            op,
            |g, v| {
                let out = net.forward(g, v, training)?;
                combined_loss(g, out.main, &out.aux, &target, &cfg.deep_supervision_weights)
            },
            &x,
        );
    }
}

/// Every operator check except the full model.
pub fn all_ops(s: &mut Suite) {
    conv2d(s);
    separable_conv2d(s);
    avg_pool2d(s);
    bilinear_resize(s);
    batch_norm(s);
    relu(s);
    softmax(s);
    gdl_loss(s);
    combined(s);
}
