use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dhff_bench::{optical, optical_tensor};
use dhff_core::detect::{default_gamma, difference_image, ocsvm_train, otsu_threshold, FeatureMatrix, OcsvmParams};
use dhff_core::features::gram;
use dhff_core::iist::{loss_and_grad, Targets};
use dhff_core::synthgen::gen_pair;
use dhff_core::vggnet::{conv2d, forward, random_base_weights};
use dhff_core::{ContentLayer, PoolingMode, RngStream, Tensor};

fn conv(c: &mut Criterion) {
    let w = random_base_weights(1);
    let layer = &w.layers()[2];
    let mut rng = RngStream::new(2);
    let input = Tensor::from_vec(64, 32, 32, (0..64 * 32 * 32).map(|_| rng.next_f64() as f32).collect()).unwrap();
    c.bench_function("conv2d 64->128 at 32x32", |b| b.iter(|| conv2d(black_box(&input), layer).unwrap()));
}

fn network(c: &mut Criterion) {
    let w = random_base_weights(42);
    let img = optical_tensor(64);
    let mut group = c.benchmark_group("vgg19 64x64");
    group.sample_size(10);
    group.bench_function("forward", |b| b.iter(|| forward(&w, black_box(&img), PoolingMode::Max).unwrap()));
    let pair = gen_pair(3, 64, 0.1).unwrap();
    let sar = dhff_core::image::to_rgb(&pair.sar).to_tensor::<f32>();
    let targets = Targets::extract(&w, &sar, &img, ContentLayer::Conv5_4, PoolingMode::Max).unwrap();
    group.bench_function("loss and gradient", |b| {
        b.iter(|| loss_and_grad(black_box(&sar), &targets, &w, 0.01, PoolingMode::Max).unwrap())
    });
    group.finish();
}

fn grams(c: &mut Criterion) {
    let mut rng = RngStream::new(3);
    let map = Tensor::from_vec(512, 8, 8, (0..512 * 64).map(|_| rng.next_f64() as f32).collect()).unwrap();
    c.bench_function("gram 512x8x8", |b| b.iter(|| gram(black_box(&map))));
}

fn detectors(c: &mut Criterion) {
    let pair = gen_pair(3, 64, 0.1).unwrap();
    let diff = difference_image(&optical(64), &dhff_core::image::to_rgb(&pair.sar)).unwrap();
    c.bench_function("otsu 64x64", |b| b.iter(|| otsu_threshold(black_box(&diff)).unwrap()));
    let mut rng = RngStream::new(4);
    let samples = FeatureMatrix { dim: 4, data: (0..4 * 500).map(|_| rng.next_gaussian(0.0, 1.0)).collect() };
    let params = OcsvmParams { gamma: default_gamma(&samples), ..Default::default() };
    let mut group = c.benchmark_group("ocsvm");
    group.sample_size(10);
    group.bench_function("train 500x4", |b| b.iter(|| ocsvm_train(black_box(&samples), &params).unwrap()));
    group.finish();
}

criterion_group!(benches, conv, network, grams, detectors);
criterion_main!(benches);
