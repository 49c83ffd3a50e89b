use std::hint::black_box;

use asddpg_core::networks::NetConfig;
use asddpg_core::tensor::{conv1d_backward, conv1d_forward, fc_backward, fc_forward};
use asddpg_core::world::Pose;
use asddpg_core::{LayerParams, Tensor, WorldSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn fully_connected(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("fc");
    for (n_in, n_out) in [(4036, 100), (100, 100), (256, 256)] {
        let mut p = LayerParams::uniform("fc", &[n_in, n_out], &[n_out], 0.1, &mut rng);
        let x = random(&mut rng, &[64, n_in]);
        let g = random(&mut rng, &[64, n_out]);
        let id = format!("{n_in}x{n_out}");
        group.bench_with_input(BenchmarkId::new("forward_b64", &id), &x, |b, x| {
            b.iter(|| fc_forward(black_box(x), &p).unwrap())
        });
        group.bench_function(BenchmarkId::new("backward_b64", &id), |b| {
            b.iter(|| fc_backward(black_box(&x), &mut p, &g).unwrap())
        });
    }
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("conv1d");
    let cfg = NetConfig::default_conv();
    let mut p0 = LayerParams::uniform("c0", &[32, 3, cfg[0].kernel], &[32], 0.1, &mut rng);
    let mut p1 = LayerParams::uniform("c1", &[32, 32, cfg[1].kernel], &[32], 0.1, &mut rng);
    let x0 = random(&mut rng, &[3, 512]);
    let y0 = conv1d_forward(&x0, &p0, 2).unwrap();
    let y1 = conv1d_forward(&y0, &p1, 2).unwrap();
    group.bench_function("forward_3x512", |b| b.iter(|| conv1d_forward(black_box(&x0), &p0, 2).unwrap()));
    group.bench_function("forward_32x254", |b| b.iter(|| conv1d_forward(black_box(&y0), &p1, 2).unwrap()));
    group.bench_function("backward_3x512", |b| {
        b.iter(|| conv1d_backward(black_box(&x0), &mut p0, 2, &y0).unwrap())
    });
    group.bench_function("backward_32x254", |b| {
        b.iter(|| conv1d_backward(black_box(&y0), &mut p1, 2, &y1).unwrap())
    });
    group.finish();
}

fn raycast(c: &mut Criterion) {
    let mut group = c.benchmark_group("raycast_512");
    let pose = Pose {
        x: 0.3,
        y: -0.7,
        theta: 0.4,
    };
    for w in [WorldSpec::empty(), WorldSpec::complex()] {
        group.bench_function(w.name.clone(), |b| b.iter(|| w.raycast(black_box(&pose))));
    }
    group.finish();
}

criterion_group!(benches, fully_connected, convolution, raycast);
criterion_main!(benches);
