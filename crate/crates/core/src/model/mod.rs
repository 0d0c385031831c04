//! The segmentation network: multi-scale stem, separable-convolution
//! encoder, dilated pyramid pooling (DPP) on every skip connection, and a
//! bilinear-upsampling decoder with auxiliary heads.
//!
//! The topology is written once, in [`network`], against the [`Builder`]
//! trait. One builder traces shapes and parameter names (used to create
//! parameters and print summaries); the other records the computation on a
//! [`Graph`].

mod config;
pub mod params;

pub use config::{default_supervision_weights, ModelConfig, Variant};
pub use params::{CSegNetParams, DppBlockParams, DppBranch};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::TensorError;
use crate::nn::{kaiming_uniform, softmax_channels, BatchStats, ConvSpec, NormMode, BN_EPSILON};
use crate::tensor::{Scalar, Tensor};

/// One branch of a dilated pyramid pooling block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DppBranchSpec {
    Conv { kernel: usize, stride: usize, dilation: usize },
    AvgPool { window: usize, stride: usize },
}

/// Branch table of the pyramid block: 1×1 conv, 3×3 conv, 3×3 conv at
/// dilation 1, 3×3 conv at dilation 2, and 3×3/stride-3 average pooling.
pub const DPP_BRANCHES: [DppBranchSpec; 5] = [
    DppBranchSpec::Conv { kernel: 1, stride: 1, dilation: 1 },
    DppBranchSpec::Conv { kernel: 3, stride: 1, dilation: 1 },
    DppBranchSpec::Conv { kernel: 3, stride: 1, dilation: 1 },
    DppBranchSpec::Conv { kernel: 3, stride: 1, dilation: 2 },
    DppBranchSpec::AvgPool { window: 3, stride: 3 },
];

/// Channels × height × width of an activation (batch omitted).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

/// Operations the network topology is expressed in.
pub trait Builder {
    type X: Copy;

    fn shape(&self, x: Self::X) -> FeatureShape;
    fn conv(
        &mut self,
        name: &str,
        x: Self::X,
        out_ch: usize,
        kernel: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Result<Self::X, TensorError>;
    fn norm(&mut self, name: &str, x: Self::X) -> Result<Self::X, TensorError>;
    fn relu(&mut self, x: Self::X) -> Result<Self::X, TensorError>;
    fn avg_pool(&mut self, name: &str, x: Self::X, window: usize, stride: usize) -> Result<Self::X, TensorError>;
    fn resize(&mut self, name: &str, x: Self::X, h: usize, w: usize) -> Result<Self::X, TensorError>;
    fn concat(&mut self, name: &str, xs: &[Self::X]) -> Result<Self::X, TensorError>;
    fn add(&mut self, name: &str, a: Self::X, b: Self::X) -> Result<Self::X, TensorError>;
    /// Called once per pyramid block, with the skip stage it serves.
    fn enter_dpp(&mut self, _stage: usize) {}
}

/// Logit heads produced by [`network`].
#[derive(Clone, Debug)]
pub struct Heads<X> {
    pub main: X,
    /// Auxiliary heads ordered from the highest resolution to the lowest.
    pub aux: Vec<X>,
}

fn conv_bn_relu<B: Builder>(
    b: &mut B,
    name: &str,
    x: B::X,
    out: usize,
    kernel: usize,
    spec: ConvSpec,
) -> Result<B::X, TensorError> {
    let y = b.conv(name, x, out, kernel, spec, false)?;
    let y = b.norm(&format!("{name}.bn"), y)?;
    b.relu(y)
}

fn separable<B: Builder>(b: &mut B, name: &str, x: B::X, out: usize, spec: ConvSpec) -> Result<B::X, TensorError> {
    let c = b.shape(x).c;
    let d = b.conv(&format!("{name}.dw"), x, c, 3, spec.groups(c), false)?;
    b.conv(&format!("{name}.pw"), d, out, 1, ConvSpec::default(), false)
}

/// Three strided 3×3 convolutions, re-upsampled to full size, concatenated
/// and fused by a 1×1 convolution.
pub fn stem<B: Builder>(b: &mut B, cfg: &ModelConfig, x: B::X) -> Result<B::X, TensorError> {
    let FeatureShape { h, w, .. } = b.shape(x);
    let c0 = cfg.channels(0);
    let mut branches = Vec::with_capacity(cfg.stem_strides.len());
    for (i, &s) in cfg.stem_strides.iter().enumerate() {
        let name = format!("stem.b{i}");
        let mut y = conv_bn_relu(b, &name, x, c0, 3, ConvSpec::default().stride(s))?;
        if s > 1 {
            y = b.resize(&format!("{name}.up"), y, h, w)?;
        }
        branches.push(y);
    }
    let cat = b.concat("stem.cat", &branches)?;
    conv_bn_relu(b, "stem.fuse", cat, c0, 1, ConvSpec::default())
}

/// Two separable convolutions with a 1×1 projection shortcut.
fn encoder_block<B: Builder>(b: &mut B, cfg: &ModelConfig, stage: usize, x: B::X) -> Result<B::X, TensorError> {
    let c = cfg.channels(stage);
    let p = format!("enc.{stage}");
    let h = separable(b, &format!("{p}.sep1"), x, c, ConvSpec::default())?;
    let h = b.norm(&format!("{p}.bn1"), h)?;
    let h = b.relu(h)?;
    let h = separable(b, &format!("{p}.sep2"), h, c, ConvSpec::default())?;
    let h = b.norm(&format!("{p}.bn2"), h)?;
    let s = b.conv(&format!("{p}.short"), x, c, 1, ConvSpec::default(), false)?;
    let s = b.norm(&format!("{p}.short.bn"), s)?;
    let y = b.add(&format!("{p}.add"), h, s)?;
    b.relu(y)
}

fn downsample<B: Builder>(b: &mut B, stage: usize, x: B::X) -> Result<B::X, TensorError> {
    let c = b.shape(x).c;
    let name = format!("enc.{stage}.down");
    let y = separable(b, &name, x, c, ConvSpec::default().stride(2))?;
    let y = b.norm(&format!("{name}.bn"), y)?;
    b.relu(y)
}

/// Dilated pyramid pooling: the five [`DPP_BRANCHES`] in parallel, pooled
/// branch resized back to the input size, concatenated, and compressed back
/// to the input channel count by the fuse convolution.
pub fn dpp_block<B: Builder>(b: &mut B, cfg: &ModelConfig, stage: usize, f: B::X) -> Result<B::X, TensorError> {
    let FeatureShape { c, h, w } = b.shape(f);
    if h < 3 || w < 3 {
        return Err(TensorError::InputTooSmall { op: "dpp_block", h, w, min: 3 });
    }
    b.enter_dpp(stage);
    let mut outs = Vec::with_capacity(DPP_BRANCHES.len());
    for (i, branch) in DPP_BRANCHES.iter().enumerate() {
        let name = format!("dpp.{stage}.b{i}");
        let y = match *branch {
            DppBranchSpec::Conv { kernel, stride, dilation } => {
                conv_bn_relu(b, &name, f, c, kernel, ConvSpec::default().stride(stride).dilation(dilation))?
            }
            DppBranchSpec::AvgPool { window, stride } => {
                let pooled = b.avg_pool(&name, f, window, stride)?;
                b.resize(&format!("{name}.up"), pooled, h, w)?
            }
        };
        outs.push(y);
    }
    let cat = b.concat(&format!("dpp.{stage}.cat"), &outs)?;
    b.conv(&format!("dpp.{stage}.fuse"), cat, c, cfg.pyramid_fuse_kernel, ConvSpec::default(), true)
}

fn decoder_block<B: Builder>(
    b: &mut B,
    cfg: &ModelConfig,
    stage: usize,
    deeper: B::X,
    skip: B::X,
) -> Result<B::X, TensorError> {
    let FeatureShape { h, w, .. } = b.shape(skip);
    let c = cfg.channels(stage);
    let p = format!("dec.{stage}");
    let up = b.resize(&format!("{p}.up"), deeper, h, w)?;
    let cat = b.concat(&format!("{p}.cat"), &[up, skip])?;
    let y = separable(b, &format!("{p}.sep1"), cat, c, ConvSpec::default())?;
    let y = b.norm(&format!("{p}.bn1"), y)?;
    let y = b.relu(y)?;
    let y = separable(b, &format!("{p}.sep2"), y, c, ConvSpec::default())?;
    let y = b.norm(&format!("{p}.bn2"), y)?;
    b.relu(y)
}

/// The full network.
pub fn network<B: Builder>(b: &mut B, cfg: &ModelConfig, x: B::X) -> Result<Heads<B::X>, TensorError> {
    let n = cfg.num_classes;
    let head = |b: &mut B, name: &str, x| b.conv(name, x, n, 1, ConvSpec::default(), true);

    let mut cur = stem(b, cfg, x)?;
    let mut skips = Vec::with_capacity(cfg.stages);
    for s in 0..cfg.stages {
        let f = encoder_block(b, cfg, s, cur)?;
        let skip = match cfg.variant {
            Variant::Csegnet => dpp_block(b, cfg, s, f)?,
            Variant::UnetBaseline => f,
        };
        skips.push(skip);
        if s + 1 < cfg.stages {
            cur = downsample(b, s, f)?;
        }
    }

    let deepest = cfg.stages - 1;
    let mut d = skips[deepest];
    let mut aux = vec![head(b, &format!("head.aux{deepest}"), d)?];
    for s in (0..deepest).rev() {
        d = decoder_block(b, cfg, s, d, skips[s])?;
        if s > 0 {
            aux.push(head(b, &format!("head.aux{s}"), d)?);
        }
    }
    aux.reverse();
    let main = head(b, "head.main", d)?;
    Ok(Heads { main, aux })
}

/// Kind of a parameter tensor, which fixes its initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, Self::RunningMean | Self::RunningVar)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

/// One row of the architecture summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub op: String,
    pub out: FeatureShape,
    pub params: usize,
}

/// Shape-only builder: records layers and parameter specs in creation order.
#[derive(Default)]
pub struct ShapeTracer {
    pub layers: Vec<LayerInfo>,
    pub params: Vec<ParamSpec>,
    pub dpp_stages: Vec<usize>,
}

impl ShapeTracer {
    fn push(&mut self, name: &str, op: String, out: FeatureShape, params: Vec<ParamSpec>) -> FeatureShape {
        let count = params.iter().filter(|p| p.kind.trainable()).map(|p| p.shape.iter().product::<usize>()).sum();
        self.layers.push(LayerInfo { name: name.to_string(), op, out, params: count });
        self.params.extend(params);
        out
    }

    pub fn trace(cfg: &ModelConfig) -> Result<Self, TensorError> {
        cfg.validate()?;
        let mut t = Self::default();
        let (h, w) = cfg.input_size;
        network(&mut t, cfg, FeatureShape { c: 1, h, w })?;
        Ok(t)
    }
}

impl Builder for ShapeTracer {
    type X = FeatureShape;

    fn shape(&self, x: FeatureShape) -> FeatureShape {
        x
    }

    fn conv(
        &mut self,
        name: &str,
        x: FeatureShape,
        out_ch: usize,
        kernel: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Result<FeatureShape, TensorError> {
        if !x.c.is_multiple_of(spec.groups) {
            return Err(TensorError::InvalidConfig(format!("{name}: groups do not divide channels")));
        }
        let out = FeatureShape { c: out_ch, h: x.h.div_ceil(spec.stride.0), w: x.w.div_ceil(spec.stride.1) };
        let mut params = vec![ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![out_ch, x.c / spec.groups, kernel, kernel],
            kind: ParamKind::ConvWeight,
        }];
        if bias {
            params.push(ParamSpec { name: format!("{name}.bias"), shape: vec![out_ch], kind: ParamKind::Bias });
        }
        let op = format!(
            "conv {kernel}x{kernel} s{} d{}{}",
            spec.stride.0,
            spec.dilation.0,
            if spec.groups > 1 { format!(" g{}", spec.groups) } else { String::new() }
        );
        Ok(self.push(name, op, out, params))
    }

    fn norm(&mut self, name: &str, x: FeatureShape) -> Result<FeatureShape, TensorError> {
        let c = vec![x.c];
        let params = [
            ("gamma", ParamKind::Gamma),
            ("beta", ParamKind::Beta),
            ("running_mean", ParamKind::RunningMean),
            ("running_var", ParamKind::RunningVar),
        ]
        .into_iter()
        .map(|(suffix, kind)| ParamSpec { name: format!("{name}.{suffix}"), shape: c.clone(), kind })
        .collect();
        Ok(self.push(name, "batch_norm".into(), x, params))
    }

    fn relu(&mut self, x: FeatureShape) -> Result<FeatureShape, TensorError> {
        Ok(x)
    }

    fn avg_pool(
        &mut self,
        name: &str,
        x: FeatureShape,
        window: usize,
        stride: usize,
    ) -> Result<FeatureShape, TensorError> {
        if x.h < window || x.w < window {
            return Err(TensorError::InputTooSmall { op: "avg_pool2d", h: x.h, w: x.w, min: window });
        }
        let out =
            FeatureShape { c: x.c, h: (x.h - window).div_ceil(stride) + 1, w: (x.w - window).div_ceil(stride) + 1 };
        Ok(self.push(name, format!("avg_pool {window}x{window} s{stride}"), out, vec![]))
    }

    fn resize(&mut self, name: &str, x: FeatureShape, h: usize, w: usize) -> Result<FeatureShape, TensorError> {
        Ok(self.push(name, "bilinear_resize".into(), FeatureShape { c: x.c, h, w }, vec![]))
    }

    fn concat(&mut self, name: &str, xs: &[FeatureShape]) -> Result<FeatureShape, TensorError> {
        let first = xs[0];
        if xs.iter().any(|x| (x.h, x.w) != (first.h, first.w)) {
            return Err(TensorError::SpatialMismatch { expected: vec![first.h, first.w], actual: vec![] });
        }
        let out = FeatureShape { c: xs.iter().map(|x| x.c).sum(), ..first };
        Ok(self.push(name, "concat".into(), out, vec![]))
    }

    fn add(&mut self, name: &str, a: FeatureShape, b: FeatureShape) -> Result<FeatureShape, TensorError> {
        if a != b {
            return Err(TensorError::ShapeMismatch { op: "add", lhs: vec![a.c, a.h, a.w], rhs: vec![b.c, b.h, b.w] });
        }
        Ok(self.push(name, "add".into(), a, vec![]))
    }

    fn enter_dpp(&mut self, stage: usize) {
        self.dpp_stages.push(stage);
    }
}

/// Builder that records the computation on a graph.
pub struct GraphBuilder<'a, T: Scalar> {
    pub graph: &'a mut Graph<T>,
    params: &'a CSegNetParams<T>,
    training: bool,
    /// Parameters become gradient leaves when set.
    track_grads: bool,
    /// Leaf variable bound to each trainable parameter name.
    pub bindings: BTreeMap<String, Var>,
    /// Batch statistics gathered by each normalization layer in training mode.
    pub batch_stats: Vec<(String, BatchStats<T>)>,
    pub dpp_stages: Vec<usize>,
}

impl<'a, T: Scalar> GraphBuilder<'a, T> {
    pub fn new(graph: &'a mut Graph<T>, params: &'a CSegNetParams<T>, training: bool) -> Self {
        Self {
            graph,
            params,
            training,
            track_grads: training,
            bindings: BTreeMap::new(),
            batch_stats: Vec::new(),
            dpp_stages: Vec::new(),
        }
    }

    /// Records parameters as gradient leaves even in evaluation mode.
    pub fn with_grads(mut self, on: bool) -> Self {
        self.track_grads = on;
        self
    }

    fn lookup(&self, name: &str) -> Result<&'a Tensor<T>, TensorError> {
        self.params.get(name).ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    fn bind(&mut self, name: &str) -> Result<Var, TensorError> {
        if let Some(&v) = self.bindings.get(name) {
            return Ok(v);
        }
        let t = self.lookup(name)?.clone();
        let v = if self.track_grads { self.graph.param(t) } else { self.graph.constant(t) };
        self.bindings.insert(name.to_string(), v);
        Ok(v)
    }
}

impl<T: Scalar> Builder for GraphBuilder<'_, T> {
    type X = Var;

    fn shape(&self, x: Var) -> FeatureShape {
        let s = self.graph.shape(x);
        FeatureShape { c: s[1], h: s[2], w: s[3] }
    }

    fn conv(
        &mut self,
        name: &str,
        x: Var,
        _out_ch: usize,
        _kernel: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Result<Var, TensorError> {
        let w = self.bind(&format!("{name}.weight"))?;
        let b = if bias { Some(self.bind(&format!("{name}.bias"))?) } else { None };
        self.graph.conv2d(x, w, b, spec)
    }

    fn norm(&mut self, name: &str, x: Var) -> Result<Var, TensorError> {
        let gamma = self.bind(&format!("{name}.gamma"))?;
        let beta = self.bind(&format!("{name}.beta"))?;
        let mode = if self.training {
            NormMode::Batch
        } else {
            NormMode::Running {
                mean: self.lookup(&format!("{name}.running_mean"))?,
                var: self.lookup(&format!("{name}.running_var"))?,
            }
        };
        let (y, stats) = self.graph.batch_norm(x, gamma, beta, mode, BN_EPSILON)?;
        if let Some(stats) = stats {
            self.batch_stats.push((name.to_string(), stats));
        }
        Ok(y)
    }

    fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.graph.relu(x)
    }

    fn avg_pool(&mut self, _name: &str, x: Var, window: usize, stride: usize) -> Result<Var, TensorError> {
        self.graph.avg_pool2d(x, window, stride)
    }

    fn resize(&mut self, _name: &str, x: Var, h: usize, w: usize) -> Result<Var, TensorError> {
        self.graph.bilinear_resize(x, h, w)
    }

    fn concat(&mut self, _name: &str, xs: &[Var]) -> Result<Var, TensorError> {
        self.graph.concat_channels(xs)
    }

    fn add(&mut self, _name: &str, a: Var, b: Var) -> Result<Var, TensorError> {
        self.graph.add(a, b)
    }

    fn enter_dpp(&mut self, stage: usize) {
        self.dpp_stages.push(stage);
    }
}

/// Result of a forward pass on a graph.
pub struct ForwardOutput<T> {
    pub main: Var,
    pub aux: Vec<Var>,
    pub bindings: BTreeMap<String, Var>,
    pub batch_stats: Vec<(String, BatchStats<T>)>,
    pub dpp_stages: Vec<usize>,
}

/// A configured network with its parameters.
#[derive(Clone, Debug)]
pub struct CSegNet<T> {
    pub config: ModelConfig,
    pub params: CSegNetParams<T>,
}

impl<T: Scalar> CSegNet<T> {
    /// Deterministic construction: conv weights fan-in uniform from a
    /// `seed`-ed stream in layer order, biases and shifts zero, scales one.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self, TensorError> {
        let trace = ShapeTracer::trace(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for spec in trace.params {
            let t = match spec.kind {
                ParamKind::ConvWeight => kaiming_uniform(&spec.shape, &mut rng),
                ParamKind::Bias | ParamKind::Beta | ParamKind::RunningMean => Tensor::zeros(&spec.shape),
                ParamKind::Gamma | ParamKind::RunningVar => Tensor::ones(&spec.shape),
            };
            tensors.insert(spec.name, t);
        }
        Ok(Self { config, params: CSegNetParams::from_map(tensors) })
    }

    pub fn from_parts(config: ModelConfig, params: CSegNetParams<T>) -> Result<Self, TensorError> {
        let expected = ShapeTracer::trace(&config)?;
        for spec in &expected.params {
            let t = params.get(&spec.name).ok_or_else(|| TensorError::UnknownParameter(spec.name.clone()))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "parameter",
                    lhs: spec.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        if params.len() != expected.params.len() {
            return Err(TensorError::InvalidConfig("parameter set does not match the configuration".into()));
        }
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> CSegNet<U> {
        CSegNet { config: self.config.clone(), params: self.params.cast() }
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), TensorError> {
        let (h, w) = self.config.input_size;
        match shape {
            [_, 1, ih, iw] if (*ih, *iw) == (h, w) => Ok(()),
            _ => Err(TensorError::ShapeMismatch { op: "forward", lhs: vec![0, 1, h, w], rhs: shape.to_vec() }),
        }
    }

    /// Records the network on `g` for input `x: (B, 1, H, W)`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, training: bool) -> Result<ForwardOutput<T>, TensorError> {
        self.forward_with(g, x, training, training)
    }

    /// Like [`CSegNet::forward`], choosing separately whether parameters
    /// become gradient leaves.
    pub fn forward_with(
        &self,
        g: &mut Graph<T>,
        x: Var,
        training: bool,
        track_grads: bool,
    ) -> Result<ForwardOutput<T>, TensorError> {
        self.check_input(g.shape(x))?;
        let mut b = GraphBuilder::new(g, &self.params, training).with_grads(track_grads);
        let heads = network(&mut b, &self.config, x)?;
        Ok(ForwardOutput {
            main: heads.main,
            aux: heads.aux,
            bindings: b.bindings,
            batch_stats: b.batch_stats,
            dpp_stages: b.dpp_stages,
        })
    }

    /// Runs only the input stem.
    pub fn stem(&self, g: &mut Graph<T>, x: Var, training: bool) -> Result<Var, TensorError> {
        let mut b = GraphBuilder::new(g, &self.params, training);
        stem(&mut b, &self.config, x)
    }

    /// Runs only the pyramid block of skip `stage` on features `f`.
    pub fn dpp_block(&self, g: &mut Graph<T>, stage: usize, f: Var, training: bool) -> Result<Var, TensorError> {
        let mut b = GraphBuilder::new(g, &self.params, training);
        dpp_block(&mut b, &self.config, stage, f)
    }

    /// Folds batch statistics into the running averages.
    pub fn apply_batch_stats(&mut self, stats: &[(String, BatchStats<T>)]) {
        for (name, s) in stats {
            let mut mean = self.params.take(&format!("{name}.running_mean")).expect("running mean");
            let mut var = self.params.take(&format!("{name}.running_var")).expect("running var");
            s.update(&mut mean, &mut var, crate::nn::BN_MOMENTUM);
            self.params.insert(format!("{name}.running_mean"), mean);
            self.params.insert(format!("{name}.running_var"), var);
        }
    }

    /// Evaluation-mode class probabilities `(B, N, H, W)` for `images: (B, 1, H, W)`.
    /// With `aggregate_aux` set, upsampled auxiliary probabilities are
    /// averaged with the main head.
    pub fn predict_proba(&self, images: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let out = self.forward(&mut g, x, false)?;
        let main = softmax_channels(g.value(out.main))?;
        if !self.config.aggregate_aux {
            return Ok(main);
        }
        let [_, _, h, w] = main.dims4()?;
        let mut acc = main;
        for &a in &out.aux {
            let up = g.bilinear_resize(a, h, w)?;
            let p = softmax_channels(g.value(up))?;
            acc.add_assign_tensor(&p);
        }
        let k = T::lit((1 + out.aux.len()) as f64);
        Ok(acc.map(|v| v / k))
    }

    pub fn num_params(&self) -> usize {
        self.params.num_trainable()
    }
}

/// Plain-text table of layer name, output shape and parameter count.
pub fn summary(cfg: &ModelConfig) -> Result<String, TensorError> {
    let trace = ShapeTracer::trace(cfg)?;
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:<22} {:>16} {:>10}", "layer", "op", "output (C,H,W)", "params");
    let _ = writeln!(s, "{}", "-".repeat(75));
    let mut total = 0;
    for l in &trace.layers {
        total += l.params;
        let shape = format!("({}, {}, {})", l.out.c, l.out.h, l.out.w);
        let _ = writeln!(s, "{:<24} {:<22} {:>16} {:>10}", l.name, l.op, shape, l.params);
    }
    let _ = writeln!(s, "{}", "-".repeat(75));
    let _ = writeln!(s, "total trainable parameters: {total}");
    Ok(s)
}
