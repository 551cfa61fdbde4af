//! Throughput of the packed kernel against a byte-per-weight baseline.

use std::hint::black_box;
use std::io::Write;
use std::time::{Duration, Instant};

use bmlp::bitcore::dot_words;
use bmlp::rng::{stream, PrngStream, Purpose};
use bmlp::train::train_batch;
use bmlp::{BitMatrix, BitVector, Hyperparams, Network};
use rand::Rng;

use crate::error::{CliError, Result};

#[derive(Clone, Debug)]
pub struct MatvecTiming {
    pub size: usize,
    pub packed_ns: f64,
    pub naive_ns: f64,
}

impl MatvecTiming {
    pub fn speedup(&self) -> f64 {
        self.naive_ns / self.packed_ns
    }
}

/// Runs `f` repeatedly for at least `budget` and returns nanoseconds per call.
fn time_per_call(budget: Duration, mut f: impl FnMut()) -> f64 {
    let mut calls = 0u64;
    let start = Instant::now();
    while start.elapsed() < budget || calls == 0 {
        f();
        calls += 1;
    }
    start.elapsed().as_nanos() as f64 / calls as f64
}

pub fn packed_matvec(w: &BitMatrix, x: &BitVector, y: &mut [i32]) {
    for (r, out) in y.iter_mut().enumerate() {
        *out = dot_words(w.row_words(r), x.words(), w.cols());
    }
}

/// Reference: one signed byte per ±1 entry.
pub fn naive_matvec(w: &[i8], x: &[i8], y: &mut [i32]) {
    let n = x.len();
    for (r, out) in y.iter_mut().enumerate() {
        *out = w[r * n..(r + 1) * n].iter().zip(x).map(|(&a, &b)| a as i32 * b as i32).sum();
    }
}

fn random_signs(rng: &mut PrngStream, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

/// Times a `size × size` matrix-vector product both ways.
pub fn bench_matvec(size: usize, budget: Duration) -> MatvecTiming {
    let mut rng = stream(size as u64, Purpose::Init);
    let w_bytes = random_signs(&mut rng, size * size);
    let x_bytes = random_signs(&mut rng, size);
    let w = BitMatrix::from_fn(size, size, |r, c| w_bytes[r * size + c] > 0);
    let x = BitVector::from_bools(x_bytes.iter().map(|&v| v > 0));
    let mut y = vec![0i32; size];
    let packed_ns = time_per_call(budget, || packed_matvec(black_box(&w), black_box(&x), &mut y));
    let mut y_naive = vec![0i32; size];
    let naive_ns = time_per_call(budget, || naive_matvec(black_box(&w_bytes), black_box(&x_bytes), &mut y_naive));
    assert_eq!(y, y_naive, "packed and naive kernels disagree");
    MatvecTiming { size, packed_ns, naive_ns }
}

/// Patterns per second through `train_batch` on a single layer of `size`
/// perceptrons with `size` random inputs and ten classes.
pub fn bench_train_batch(size: usize, batches: u32) -> Result<f64> {
    let hyper = Hyperparams::default();
    let mut rng = stream(hyper.seed, Purpose::Init);
    let mut net = Network::init(&[size, size], 10, &hyper, &mut rng)?;
    let groups = hyper.group_sizes(&net.layer_sizes())?;
    let bs = hyper.batch_size;
    let input = BitMatrix::from_fn(bs, size, |_, _| rng.gen());
    let labels: Vec<u8> = (0..bs).map(|_| rng.gen_range(0..10)).collect();
    let start = Instant::now();
    for b in 0..batches {
        train_batch(&mut net, &input, &labels, &hyper, &groups, hyper.p_r0, 0, b)?;
    }
    Ok((batches as usize * bs) as f64 / start.elapsed().as_secs_f64())
}

pub fn run_bench(sizes: &[usize], budget: Duration, batches: u32, out: &mut dyn Write) -> Result<()> {
    let io = |e| CliError::io("<output>", e);
    for &k in sizes {
        let t = bench_matvec(k, budget);
        writeln!(
            out,
            "matvec size={} packed_ns={:.0} naive_ns={:.0} speedup={:.2}",
            t.size,
            t.packed_ns,
            t.naive_ns,
            t.speedup()
        )
        .map_err(io)?;
    }
    for &k in sizes {
        let pps = bench_train_batch(k, batches)?;
        writeln!(out, "train_batch size={k} patterns_per_sec={pps:.0}").map_err(io)?;
    }
    Ok(())
}
