use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csegnet::nn::{ConvSpec, Padding};
use csegnet::Graph;
use csegnet_bench::random_tensor;

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d");
    let cases = [
        ("3x3", 16, 16, 64, ConvSpec::default()),
        ("3x3_dilated", 16, 16, 64, ConvSpec::default().dilation(2)),
        ("3x3_stride2", 16, 16, 64, ConvSpec::default().stride(2)),
        ("depthwise", 32, 32, 32, ConvSpec::default().groups(32)),
        ("1x1", 64, 64, 32, ConvSpec::default().padding(Padding::Same)),
    ];
    for (name, cin, cout, size, spec) in cases {
        let k = if name == "1x1" { 1 } else { 3 };
        let x = random_tensor(&[8, cin, size, size], 1);
        let w = random_tensor(&[cout, cin / spec.groups, k, k], 2);
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
                g.conv2d(xv, wv, None, spec).unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("forward_backward", name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let (xv, wv) = (g.param(x.clone()), g.param(w.clone()));
                let y = g.conv2d(xv, wv, None, spec).unwrap();
                let s = g.sum_all(y).unwrap();
                g.backward(s).unwrap()
            })
        });
    }
    group.finish();
}

fn resize(c: &mut Criterion) {
    let x = random_tensor(&[8, 16, 32, 32], 3);
    c.bench_function("bilinear_resize_32_to_128", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            g.bilinear_resize(xv, 128, 128).unwrap()
        })
    });
}

criterion_group!(benches, conv, resize);
criterion_main!(benches);
