//! Temporary timing probe (deleted before delivery).

use dehaze_core::net::{forward_train, grads_on_batch, NetworkParams};
use dehaze_core::nn::{conv2d_backward, conv2d_forward, maxpool_spatial_forward, Conv2DLayer};
use dehaze_core::Tensor;
use dehaze_testkit as tk;
use std::time::Instant;

#[test]
#[ignore]
fn timing_probe() {
    let mut rng = tk::rng(0);
    let input = Tensor::random_uniform([1, 64, 64, 3], 0.0, 1.0, &mut rng);
    let target = Tensor::random_uniform([1, 64, 64, 1], 0.3, 1.0, &mut rng);
    let params = NetworkParams::init(0);

    let t0 = Instant::now();
    let n = 5;
    for _ in 0..n {
        let _ = forward_train(&params, &input).unwrap();
    }
    println!("forward_train 64x64x1: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);

    let t0 = Instant::now();
    for _ in 0..n {
        let _ = grads_on_batch(&params, &input, &target).unwrap();
    }
    println!("fwd+bwd 64x64x1: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);

    // Per-layer costs.
    let features = Tensor::random_uniform([1, 64, 64, 32], -1.0, 1.0, &mut rng);
    for (k, name) in [(3usize, "ms3"), (5, "ms5"), (7, "ms7")] {
        let layer = Conv2DLayer::init(k, k, 32, 16, &mut rng).unwrap();
        let t0 = Instant::now();
        for _ in 0..n {
            let _ = conv2d_forward(&features, &layer).unwrap();
        }
        println!("{name} fwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);
        let go = Tensor::random_uniform([1, 64, 64, 16], -1.0, 1.0, &mut rng);
        let t0 = Instant::now();
        for _ in 0..n {
            let _ = conv2d_backward(&features, &layer, &go).unwrap();
        }
        println!("{name} bwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);
    }

    let cat = Tensor::random_uniform([1, 64, 64, 48], -1.0, 1.0, &mut rng);
    let t0 = Instant::now();
    for _ in 0..n {
        let _ = maxpool_spatial_forward(&cat, 7, 1).unwrap();
    }
    println!("pool fwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);

    let final_layer = Conv2DLayer::init(5, 5, 48, 1, &mut rng).unwrap();
    let pooled = Tensor::random_uniform([1, 64, 64, 48], -1.0, 1.0, &mut rng);
    let t0 = Instant::now();
    for _ in 0..n {
        let _ = conv2d_forward(&pooled, &final_layer).unwrap();
    }
    println!("final fwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);
    let go1 = Tensor::random_uniform([1, 64, 64, 1], -1.0, 1.0, &mut rng);
    let t0 = Instant::now();
    for _ in 0..n {
        let _ = conv2d_backward(&pooled, &final_layer, &go1).unwrap();
    }
    println!("final bwd: {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);

    let plane = Tensor::random_uniform([1, 64, 64, 1], 0.0, 1.0, &mut rng);
    let s1 = Conv2DLayer::init(3, 3, 1, 32, &mut rng).unwrap();
    let t0 = Instant::now();
    for _ in 0..n {
        let _ = conv2d_forward(&plane, &s1).unwrap();
    }
    println!("stage1 fwd (one bank): {:.1} ms", t0.elapsed().as_secs_f64() * 1000.0 / n as f64);
}

#[test]
#[ignore]
fn gemm_probe() {
    for (m, k, n) in [
        (4096usize, 1568usize, 16usize),
        (1568, 4096, 16),
        (4096, 16, 1568),
        (4096, 1568, 48),
        (1024, 1024, 1024),
        (4096, 800, 16),
    ] {
        let a = vec![1.0f64; m * k];
        let b = vec![1.0f64; k * n];
        let mut c = vec![0.0f64; m * n];
        let t0 = Instant::now();
        let reps = 5;
        for _ in 0..reps {
            unsafe {
                matrixmultiply::dgemm(
                    m, k, n, 1.0,
                    a.as_ptr(), k as isize, 1,
                    b.as_ptr(), n as isize, 1,
                    0.0,
                    c.as_mut_ptr(), n as isize, 1,
                );
            }
        }
        let secs = t0.elapsed().as_secs_f64() / reps as f64;
        let gflops = 2.0 * (m * k * n) as f64 / secs / 1e9;
        println!("{m}x{k}x{n}: {:.1} ms, {gflops:.1} GFLOP/s", secs * 1000.0);
    }
}
