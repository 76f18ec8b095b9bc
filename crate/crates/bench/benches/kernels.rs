use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shardnet_core::data::{spectrogram, ActivityWindow, LabeledData};
use shardnet_core::engine::{map_train, partition, reduce_average, PartialModel, RoundConfig, Weighting};
use shardnet_core::pretrain::AutoencoderLayer;
use shardnet_core::{DeepModel, LossKind, Matrix, Targets};

fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0f32..1.0)).collect()).unwrap()
}

fn forward_backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("model");
    let x = batch(100, 303, 1);
    let y: Vec<usize> = (0..100).map(|i| i % 6).collect();
    for dims in [vec![128, 128], vec![256, 256, 256]] {
        let model = DeepModel::init(303, &dims, 6, 0).unwrap();
        let name = format!("{dims:?}");
        g.throughput(Throughput::Elements(100));
        g.bench_with_input(BenchmarkId::new("forward", &name), &model, |b, m| b.iter(|| m.forward(black_box(&x)).unwrap()));
        g.bench_with_input(BenchmarkId::new("backprop", &name), &model, |b, m| {
            b.iter(|| m.backprop(black_box(&x), Targets::Labels(&y), LossKind::SoftmaxCrossEntropy).unwrap())
        });
    }
    let ae = AutoencoderLayer::glorot(303, 128, &mut ChaCha8Rng::seed_from_u64(2));
    g.bench_function("autoencoder_gradients", |b| b.iter(|| ae.gradients(black_box(&x), &x).unwrap()));
    g.finish();
}

fn spectrograms(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let triples: Vec<[f32; 3]> = (0..200).map(|_| std::array::from_fn(|_| rng.random_range(-10.0f32..10.0))).collect();
    let w = ActivityWindow::from_triples(&triples, None, 0);
    c.bench_function("spectrogram_200", |b| b.iter(|| spectrogram(black_box(&w), 200).unwrap()));
}

fn reduce(c: &mut Criterion) {
    let mut g = c.benchmark_group("reduce_average");
    for k in [2usize, 4, 8] {
        let partials: Vec<_> = (0..k)
            .map(|s| PartialModel {
                round: 0,
                shard_id: s,
                trained_on: 100,
                mean_loss: 0.0,
                params: DeepModel::init(303, &[256, 256, 256], 6, s as u64).unwrap(),
            })
            .collect();
        g.bench_with_input(BenchmarkId::from_parameter(k), &partials, |b, p| {
            b.iter(|| reduce_average(black_box(p), Weighting::Uniform).unwrap())
        });
    }
    g.finish();
}

fn map_task(c: &mut Criterion) {
    let x = batch(1000, 303, 4);
    let data = LabeledData::new(x, (0..1000).map(|i| i % 6).collect(), 6).unwrap();
    let shard = partition(&data, 1, 0).unwrap().remove(0);
    let master = DeepModel::init(303, &[128, 128], 6, 0).unwrap();
    let cfg = RoundConfig { iterations_per_map: 10, ..Default::default() };
    c.bench_function("map_train_10x100", |b| b.iter(|| map_train(&shard, &master, &cfg, 0, 0).unwrap()));
}

criterion_group!(benches, forward_backward, spectrograms, reduce, map_task);
criterion_main!(benches);
