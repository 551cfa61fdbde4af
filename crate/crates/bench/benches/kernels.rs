use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;

use bmlp::bitcore::xnor_popcount_dot;
use bmlp::rng::{stream, Purpose};
use bmlp::train::train_batch;
use bmlp::{BitMatrix, BitVector, Hyperparams, Network};
use bmlp_cli::bench::{naive_matvec, packed_matvec};

fn dot(c: &mut Criterion) {
    let mut rng = stream(1, Purpose::Init);
    let mut group = c.benchmark_group("dot");
    for len in [64, 784, 1035, 4096] {
        let a: BitVector = BitVector::from_bools((0..len).map(|_| rng.gen::<bool>()));
        let b: BitVector = BitVector::from_bools((0..len).map(|_| rng.gen::<bool>()));
        group.throughput(Throughput::Elements(len as u64));
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |bench, _| {
            bench.iter(|| xnor_popcount_dot(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn matvec(c: &mut Criterion) {
    let mut rng = stream(2, Purpose::Init);
    let mut group = c.benchmark_group("matvec");
    for k in [256usize, 1024] {
        let w_bytes: Vec<i8> = (0..k * k).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        let x_bytes: Vec<i8> = (0..k).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        let w = BitMatrix::from_fn(k, k, |r, col| w_bytes[r * k + col] > 0);
        let x = BitVector::from_bools(x_bytes.iter().map(|&v| v > 0));
        let mut y = vec![0i32; k];
        group.throughput(Throughput::Elements((k * k) as u64));
        group.bench_with_input(BenchmarkId::new("packed", k), &k, |bench, _| {
            bench.iter(|| packed_matvec(black_box(&w), black_box(&x), &mut y))
        });
        group.bench_with_input(BenchmarkId::new("naive", k), &k, |bench, _| {
            bench.iter(|| naive_matvec(black_box(&w_bytes), black_box(&x_bytes), &mut y))
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let hyper = Hyperparams::default();
    let mut rng = stream(3, Purpose::Init);
    let mut net = Network::init(&[784, 1035], 10, &hyper, &mut rng).unwrap();
    let groups = hyper.group_sizes(&net.layer_sizes()).unwrap();
    let input = BitMatrix::from_fn(hyper.batch_size, 784, |_, _| rng.gen());
    let labels: Vec<u8> = (0..hyper.batch_size).map(|_| rng.gen_range(0..10)).collect();
    let mut group = c.benchmark_group("train_batch");
    group.throughput(Throughput::Elements(hyper.batch_size as u64));
    group.sample_size(20);
    let mut b = 0u32;
    group.bench_function("784x1035", |bench| {
        bench.iter(|| {
            b += 1;
            train_batch(&mut net, &input, &labels, &hyper, &groups, hyper.p_r0, 0, b).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, dot, matvec, training_step);
criterion_main!(benches);
