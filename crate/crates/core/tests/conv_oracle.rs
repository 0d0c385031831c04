mod common;

use common::oracles::{self, conv_cases};
use csegnet::nn::{ConvSpec, Padding};
use csegnet::{Graph, Tensor};

fn forward(case: &oracles::ConvCase) -> Tensor<f64> {
    let mut g = Graph::new();
    let (x, w, b) = (g.constant(case.x.clone()), g.constant(case.w.clone()), g.constant(case.bias.clone()));
    let y = g.conv2d(x, w, Some(b), case.spec).unwrap();
    g.value(y).clone()
}

#[test]
fn matches_direct_loops_on_fifty_configs() {
    for (i, case) in conv_cases(50, 11).iter().enumerate() {
        let fast = forward(case);
        let slow = oracles::conv2d(&case.x, &case.w, Some(&case.bias), case.spec);
        assert_eq!(fast.shape(), slow.shape(), "case {i}: {:?}", case.spec);
        let diff = fast.max_abs_diff(&slow);
        assert!(diff <= 1e-5, "case {i} {:?}: max abs diff {diff:e}", case.spec);
    }
}

#[test]
fn f32_matches_f64_oracle() {
    for case in conv_cases(16, 12) {
        let mut g = Graph::<f32>::new();
        let x = g.constant(case.x.cast());
        let w = g.constant(case.w.cast());
        let y = g.conv2d(x, w, None, case.spec).unwrap();
        let slow = oracles::conv2d(&case.x, &case.w, None, case.spec);
        assert!(g.value(y).cast::<f64>().max_abs_diff(&slow) < 1e-4);
    }
}

#[test]
fn same_padding_output_extent() {
    for (input, stride, expected) in [(128, 1, 128), (128, 2, 64), (7, 2, 4), (5, 3, 2)] {
        let x = Tensor::<f64>::ones(&[1, 1, input, input]);
        let w = Tensor::ones(&[1, 1, 3, 3]);
        let y = oracles::conv2d(&x, &w, None, ConvSpec::default().stride(stride));
        assert_eq!(y.shape(), &[1, 1, expected, expected]);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x), g.constant(w));
        let out = g.conv2d(xv, wv, None, ConvSpec::default().stride(stride).padding(Padding::Same)).unwrap();
        assert_eq!(g.value(out), &y);
    }
}
