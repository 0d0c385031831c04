use criterion::{criterion_group, criterion_main, Criterion};
use csegnet::train::{train_step, AdamConfig, AdamState};
use csegnet::{CSegNet, ModelConfig};
use csegnet_bench::random_batch;

fn desk(c: &mut Criterion) {
    let cfg = ModelConfig::desk();
    let (images, target) = random_batch(8, cfg.input_size.0, cfg.num_classes, 0);
    let mut group = c.benchmark_group("desk_batch8");
    group.sample_size(10);

    let model = CSegNet::<f32>::build(cfg.clone(), 0).unwrap();
    group.bench_function("predict", |b| b.iter(|| model.predict_proba(&images).unwrap()));

    let mut model = CSegNet::<f32>::build(cfg, 0).unwrap();
    let mut adam = AdamState::new(AdamConfig::default());
    group.bench_function("train_step", |b| b.iter(|| train_step(&mut model, &mut adam, &images, &target).unwrap()));
    group.finish();
}

criterion_group!(benches, desk);
criterion_main!(benches);
