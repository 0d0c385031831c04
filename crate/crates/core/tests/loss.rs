mod common;

use common::oracles;
use csegnet::loss::{combined_loss, gdl, nearest_resize_labels, one_hot, ClassWeights};
use csegnet::{Graph, Tensor, TensorError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gdl_value(p: &Tensor<f64>, r: &Tensor<f64>) -> Result<f64, TensorError> {
    let mut g = Graph::new();
    let pv = g.constant(p.clone());
    let l = gdl(&mut g, pv, r)?;
    Ok(g.value(l).item())
}

/// Random probability map (per-pixel normalized) and one-hot target.
pub fn random_instance(rng: &mut ChaCha8Rng, b: usize, n: usize, h: usize, w: usize) -> (Tensor<f64>, Tensor<f64>) {
    let hw = h * w;
    let mut p = vec![0.0; b * n * hw];
    for bi in 0..b {
        for i in 0..hw {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for (l, v) in raw.iter().enumerate() {
                p[(bi * n + l) * hw + i] = v / s;
            }
        }
    }
    let labels: Vec<u8> = (0..b * hw).map(|_| rng.gen_range(0..n) as u8).collect();
    (Tensor::from_vec(&[b, n, h, w], p), one_hot(&labels, b, n, h, w))
}

#[test]
fn two_class_two_by_two_by_hand() {
    // r = [[1,0],[0,1]] for class 1; p(class 1) = [0.9, 0.2, 0.4, 0.7].
    let p1 = [0.9, 0.2, 0.4, 0.7];
    let r1 = [1.0, 0.0, 0.0, 1.0];
    let mut p = Vec::new();
    let mut r = Vec::new();
    p.extend(p1.iter().map(|v| 1.0 - v));
    p.extend(p1);
    r.extend(r1.iter().map(|v| 1.0 - v));
    r.extend(r1);
    let p = Tensor::from_vec(&[1, 2, 2, 2], p);
    let r = Tensor::from_vec(&[1, 2, 2, 2], r);
    // Both classes have volume 2, so ω = 1/4 each and cancels.
    // Intersections: class 0 → 0.8 + 0.6 = 1.4, class 1 → 0.9 + 0.7 = 1.6.
    // Totals: class 0 → 2 + 2.2 = 4.2, class 1 → 2 + 1.8 = 3.8.
    let expected = 1.0 - 2.0 * (1.4 + 1.6) / (4.2 + 3.8);
    assert!((gdl_value(&p, &r).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn matches_scalar_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (b, n) = (rng.gen_range(1..3), rng.gen_range(2..5));
        let (h, w) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let (p, r) = random_instance(&mut rng, b, n, h, w);
        let oracle = oracles::gdl(p.data(), r.data(), b, n, h * w);
        assert!((gdl_value(&p, &r).unwrap() - oracle).abs() < 1e-6);
    }
}

#[test]
fn perfect_agreement_is_zero_and_disjoint_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let (_, r) = random_instance(&mut rng, 2, 4, 5, 5);
        assert_eq!(gdl_value(&r, &r).unwrap(), 0.0);
        // Shifting every label by one class leaves no overlap anywhere.
        let [b, n, h, w] = r.dims4().unwrap();
        let hw = h * w;
        let mut shifted = vec![0.0; r.numel()];
        for bi in 0..b {
            for l in 0..n {
                let dst = (bi * n + (l + 1) % n) * hw;
                shifted[dst..dst + hw].copy_from_slice(&r.data()[(bi * n + l) * hw..][..hw]);
            }
        }
        let p = Tensor::from_vec(r.shape(), shifted);
        assert_eq!(gdl_value(&p, &r).unwrap(), 1.0);
    }
}

#[test]
fn absent_class_weight_is_finite() {
    let w = ClassWeights::from_counts(&[0.0, 4.0]);
    assert!(w.omega.iter().all(|v| v.is_finite() && *v > 0.0));
    assert_eq!(w.omega[1], 1.0 / 16.0);
    assert_eq!(w.omega[0], 1e12);
}

#[test]
fn rejects_invalid_inputs() {
    let r = one_hot::<f64>(&[0, 1, 1, 0], 1, 2, 2, 2);
    let unnormalized = Tensor::full(&[1, 2, 2, 2], 0.7);
    assert!(matches!(gdl_value(&unnormalized, &r), Err(TensorError::NotNormalized { .. })));
    let soft = Tensor::full(&[1, 2, 2, 2], 0.5);
    assert!(matches!(gdl_value(&r, &soft), Err(TensorError::NotOneHot(_))));
    let small = Tensor::full(&[1, 2, 1, 2], 0.5);
    assert!(matches!(gdl_value(&small, &r), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn combined_loss_is_weighted_sum_of_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (b, n, h, w) = (2, 4, 8, 8);
    let labels: Vec<u8> = (0..b * h * w).map(|_| rng.gen_range(0..n) as u8).collect();
    let target = one_hot::<f64>(&labels, b, n, h, w);
    let logits = |rng: &mut ChaCha8Rng, s: usize| {
        Tensor::from_vec(&[b, n, s, s], (0..b * n * s * s).map(|_| rng.gen_range(-2.0..2.0)).collect())
    };
    let (main, aux1, aux2) = (logits(&mut rng, 8), logits(&mut rng, 4), logits(&mut rng, 2));
    let weights = [1.0, 0.4, 0.2];

    let mut g = Graph::new();
    let vars = [g.constant(main.clone()), g.constant(aux1.clone()), g.constant(aux2.clone())];
    let total = combined_loss(&mut g, vars[0], &vars[1..], &target, &weights).unwrap();
    let total = g.value(total).item();

    let mut manual = 0.0;
    for (t, &wt) in [main, aux1, aux2].iter().zip(&weights) {
        let s = t.shape()[2];
        let lt = one_hot(&nearest_resize_labels(&labels, b, h, w, s, s), b, n, s, s);
        let mut g = Graph::new();
        let v = g.constant(t.clone());
        let p = g.softmax_channels(v).unwrap();
        let l = gdl(&mut g, p, &lt).unwrap();
        manual += wt * g.value(l).item();
    }
    assert!((total - manual).abs() < 1e-6);
}

#[test]
fn combined_loss_weight_length_checked() {
    let target = one_hot::<f64>(&[0, 1, 1, 0], 1, 2, 2, 2);
    let mut g = Graph::new();
    let m = g.constant(Tensor::zeros(&[1, 2, 2, 2]));
    let err = combined_loss(&mut g, m, &[], &target, &[1.0, 0.5]).unwrap_err();
    assert!(matches!(err, TensorError::WeightLengthMismatch { expected: 1, actual: 2 }));
}

#[test]
fn nearest_resize_halves() {
    let labels: Vec<u8> = (0..16).map(|i| i as u8).collect();
    assert_eq!(nearest_resize_labels(&labels, 1, 4, 4, 2, 2), vec![5, 7, 13, 15]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_in_unit_interval(seed in any::<u64>(), b in 1usize..3, n in 2usize..5, h in 1usize..5, w in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, r) = random_instance(&mut rng, b, n, h, w);
        let v = gdl_value(&p, &r).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}
