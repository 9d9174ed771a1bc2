use criterion::{criterion_group, criterion_main, Criterion};
use dehaze_bench::{random_image, random_tensor};
use dehaze_core::classical::{dark_channel, dehaze_classical};
use dehaze_core::net::{grads_on_batch, predict_transmission, NetworkParams};
use dehaze_core::nn::{conv2d_forward, maxpool_spatial_forward, Conv2DLayer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use std::time::Duration;

fn bench_classical(c: &mut Criterion) {
    let mut group = c.benchmark_group("classical");
    group.measurement_time(Duration::from_secs(8));
    let img = random_image(1, 100, 100);
    group.bench_function("dark_channel_100x100", |b| {
        b.iter(|| dark_channel(black_box(&img), 15).unwrap())
    });
    group.bench_function("dehaze_100x100", |b| {
        b.iter(|| dehaze_classical(black_box(&img)).unwrap())
    });
    group.finish();
}

fn bench_nn_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("nn");
    group.measurement_time(Duration::from_secs(8));
    let features = random_tensor(2, [1, 64, 64, 32], -1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in [3usize, 5, 7] {
        let layer = Conv2DLayer::init(k, k, 32, 16, &mut rng).unwrap();
        group.bench_function(format!("conv{k}x{k}_64x64x32to16"), |b| {
            b.iter(|| conv2d_forward(black_box(&features), &layer).unwrap())
        });
    }
    let cat = random_tensor(4, [1, 64, 64, 48], -1.0, 1.0);
    group.bench_function("maxpool7x7_64x64x48", |b| {
        b.iter(|| maxpool_spatial_forward(black_box(&cat), 7, 1).unwrap())
    });
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let mut group = c.benchmark_group("network");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(10));
    let params = NetworkParams::init(0);
    let img = random_image(5, 100, 100);
    group.bench_function("predict_100x100", |b| {
        b.iter(|| predict_transmission(black_box(&img), &params).unwrap())
    });
    let input = random_tensor(6, [1, 64, 64, 3], 0.0, 1.0);
    let target = random_tensor(7, [1, 64, 64, 1], 0.3, 1.0);
    group.bench_function("train_step_64x64", |b| {
        b.iter(|| grads_on_batch(black_box(&params), &input, &target).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_classical, bench_nn_kernels, bench_network);
criterion_main!(benches);
