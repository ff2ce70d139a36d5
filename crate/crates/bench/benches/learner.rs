use criterion::{black_box, criterion_group, criterion_main, Criterion};
use sleeve_bench::{cleaning, small_config, trained};
use sleeve_core::learner::train;
use sleeve_core::Seed;

fn learner(c: &mut Criterion) {
    let task = cleaning();
    let (ensemble, data) = trained(&task);
    let poses = task.sweep(200);

    c.bench_function("ensemble/uncertainty", |b| {
        b.iter(|| ensemble.uncertainty(black_box(&poses[57])))
    });
    c.bench_function("ensemble/uncertainty_sweep_200", |b| {
        b.iter(|| poses.iter().map(|p| ensemble.uncertainty(p).value()).sum::<f64>())
    });

    let mut group = c.benchmark_group("ensemble/train");
    group.sample_size(10);
    group.bench_function("200_epochs", |b| b.iter(|| train(black_box(&data), &small_config(), Seed(4)).unwrap()));
    group.finish();
}

criterion_group!(benches, learner);
criterion_main!(benches);
