use csegnet::model::{summary, DppBranch, DppBranchSpec, ShapeTracer, DPP_BRANCHES};
use csegnet::{CSegNet, Graph, ModelConfig, Tensor, TensorError, Variant};

fn forward_shapes(cfg: &ModelConfig, batch: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let net = CSegNet::<f32>::build(cfg.clone(), 0).unwrap();
    let (h, w) = cfg.input_size;
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[batch, 1, h, w], 0.5));
    let out = net.forward_with(&mut g, x, false, false).unwrap();
    (g.shape(out.main).to_vec(), out.aux.iter().map(|&a| g.shape(a).to_vec()).collect())
}

fn expected_aux(cfg: &ModelConfig, batch: usize) -> Vec<Vec<usize>> {
    let (h, w) = cfg.input_size;
    (1..cfg.stages).map(|s| vec![batch, 4, h >> s, w >> s]).collect()
}

#[test]
fn desk_config_shapes() {
    let cfg = ModelConfig::desk();
    let (main, aux) = forward_shapes(&cfg, 2);
    assert_eq!(main, vec![2, 4, 128, 128]);
    assert_eq!(aux, expected_aux(&cfg, 2));
    assert_eq!(aux.len() + 1, cfg.deep_supervision_weights.len());
}

#[test]
fn every_skip_has_one_pyramid_block() {
    for cfg in [ModelConfig::desk(), ModelConfig::full(), ModelConfig::default()] {
        let trace = ShapeTracer::trace(&cfg).unwrap();
        assert_eq!(trace.dpp_stages, (0..cfg.stages).collect::<Vec<_>>());
        let net = CSegNet::<f32>::build(cfg.clone(), 0).unwrap();
        for s in 0..cfg.stages {
            let block = net.params.dpp_block(s).expect("block present");
            assert_eq!(block.branches.len(), 5);
            for (branch, spec) in block.branches.iter().zip(DPP_BRANCHES) {
                match (branch, spec) {
                    (DppBranch::Conv { conv, .. }, DppBranchSpec::Conv { kernel, stride, dilation }) => {
                        assert_eq!(conv.weight.shape()[2..], [kernel, kernel]);
                        assert_eq!(conv.spec.stride, (stride, stride));
                        assert_eq!(conv.spec.dilation, (dilation, dilation));
                    }
                    (DppBranch::AvgPool { window, stride }, DppBranchSpec::AvgPool { window: w, stride: st }) => {
                        assert_eq!((*window, *stride), (w, st));
                    }
                    _ => panic!("branch kind differs from the table"),
                }
            }
        }
        assert!(net.params.dpp_block(cfg.stages).is_none());
    }
}

#[test]
fn baseline_has_identity_skips() {
    let cfg = ModelConfig::desk().variant(Variant::UnetBaseline);
    let net = CSegNet::<f32>::build(cfg.clone(), 0).unwrap();
    assert!(net.params.names().all(|n| !n.starts_with("dpp.")));
    assert!(ShapeTracer::trace(&cfg).unwrap().dpp_stages.is_empty());
    let (main, aux) = forward_shapes(&cfg, 1);
    assert_eq!(main, vec![1, 4, 128, 128]);
    assert_eq!(aux, expected_aux(&cfg, 1));
    let csegnet = CSegNet::<f32>::build(ModelConfig::desk(), 0).unwrap();
    let shared = csegnet.params.names().filter(|n| !n.starts_with("dpp.")).count();
    assert_eq!(shared, net.params.len());
}

/// Trainable parameter count derived layer by layer from the block rules.
fn audited_count(cfg: &ModelConfig) -> usize {
    let ch = |s: usize| cfg.channels(s);
    let sep = |cin: usize, cout: usize| 9 * cin + cin * cout;
    let bn = |c: usize| 2 * c;
    let (c0, nb, n) = (ch(0), cfg.stem_strides.len(), cfg.num_classes);
    let mut total = nb * (9 * c0 + bn(c0)) + nb * c0 * c0 + bn(c0);
    for s in 0..cfg.stages {
        let (cin, c) = (if s == 0 { c0 } else { ch(s - 1) }, ch(s));
        total += sep(cin, c) + bn(c) + sep(c, c) + bn(c) + cin * c + bn(c);
        if s + 1 < cfg.stages {
            total += sep(c, c) + bn(c);
        }
        if cfg.variant == Variant::Csegnet {
            let k = cfg.pyramid_fuse_kernel;
            total += c * c + bn(c) + 3 * (9 * c * c + bn(c)) + k * k * 5 * c * c + c;
        }
        if s + 1 < cfg.stages {
            let cin = ch(s + 1) + c;
            total += sep(cin, c) + bn(c) + sep(c, c) + bn(c);
        }
        total += c * n + n;
    }
    total
}

#[test]
fn parameter_count_matches_audit() {
    for cfg in [
        ModelConfig::desk(),
        ModelConfig::full(),
        ModelConfig::desk().variant(Variant::UnetBaseline),
        ModelConfig::with_scale(2, 3, 16),
    ] {
        let net = CSegNet::<f32>::build(cfg.clone(), 0).unwrap();
        assert_eq!(net.num_params(), audited_count(&cfg), "{cfg:?}");
        let traced: usize = ShapeTracer::trace(&cfg).unwrap().layers.iter().map(|l| l.params).sum();
        assert_eq!(traced, net.num_params());
    }
    assert_eq!(CSegNet::<f32>::build(ModelConfig::desk(), 0).unwrap().num_params(), 204_464);
}

#[test]
fn build_is_seeded() {
    let cfg = ModelConfig::with_scale(2, 4, 16);
    let a = CSegNet::<f32>::build(cfg.clone(), 3).unwrap();
    let b = CSegNet::<f32>::build(cfg.clone(), 3).unwrap();
    let c = CSegNet::<f32>::build(cfg, 4).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
}

#[test]
fn forward_is_deterministic() {
    let cfg = ModelConfig::with_scale(3, 4, 32);
    let net = CSegNet::<f32>::build(cfg, 1).unwrap();
    let x = Tensor::from_vec(&[2, 1, 32, 32], (0..2048).map(|i| ((i * 7919) % 97) as f32 / 48.0 - 1.0).collect());
    assert_eq!(net.predict_proba(&x).unwrap(), net.predict_proba(&x).unwrap());
}

#[test]
fn every_parameter_receives_gradient() {
    use csegnet::loss::one_hot;
    let cfg = ModelConfig::with_scale(3, 4, 32);
    let net = CSegNet::<f64>::build(cfg.clone(), 2).unwrap();
    let x = Tensor::from_vec(&[2, 1, 32, 32], (0..2048).map(|i| ((i * 31) % 23) as f64 / 11.0 - 1.0).collect());
    let labels: Vec<u8> = (0..2048).map(|i| ((i / 7) % 4) as u8).collect();
    let target = one_hot(&labels, 2, 4, 32, 32);
    let mut g = Graph::new();
    let xv = g.constant(x);
    let out = net.forward(&mut g, xv, true).unwrap();
    let p = g.softmax_channels(out.main).unwrap();
    let l = csegnet::gdl(&mut g, p, &target).unwrap();
    let grads = g.backward(l).unwrap();
    for (name, var) in &out.bindings {
        if name.starts_with("head.aux") {
            continue;
        }
        let grad = grads.get(*var).unwrap_or_else(|| panic!("{name} has no gradient"));
        let norm: f64 = grad.data().iter().map(|v| v * v).sum();
        assert!(norm.is_finite() && norm > 0.0, "{name}: {norm}");
    }
    assert_eq!(out.bindings.len(), net.params.trainable().count());
}

#[test]
fn too_small_inputs_are_rejected() {
    let cfg = ModelConfig::with_scale(3, 2, 10);
    assert!(matches!(CSegNet::<f32>::build(cfg, 0), Err(TensorError::InvalidConfig(_))));
    let deep = ModelConfig::with_scale(4, 2, 16);
    assert!(matches!(CSegNet::<f32>::build(deep, 0), Err(TensorError::InvalidConfig(_))));
    let net = CSegNet::<f32>::build(ModelConfig::with_scale(2, 2, 16), 0).unwrap();
    let mut g = Graph::new();
    let f = g.constant(Tensor::ones(&[1, 2, 2, 2]));
    assert!(matches!(net.dpp_block(&mut g, 0, f, false), Err(TensorError::InputTooSmall { .. })));
}

#[test]
fn summary_lists_layers_and_total() {
    let s = summary(&ModelConfig::desk()).unwrap();
    assert!(s.contains("dpp.0.fuse"));
    assert!(s.contains("204464") || s.contains("204,464"));
}
