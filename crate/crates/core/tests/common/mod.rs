#![allow(dead_code)]

use bmlp::rng::{stream, PrngStream, Purpose};
use bmlp::{BinarizedDataset, BitMatrix, LayerState, Network};
use rand::Rng;

pub fn rng(seed: u64) -> PrngStream {
    stream(seed, Purpose::Init)
}

pub fn random_signs(rng: &mut PrngStream, n: usize) -> Vec<i32> {
    (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()
}

/// Patterns labelled by the argmax of a fixed random ±1 teacher, so the
/// task is learnable but not trivial.
pub fn teacher_dataset(seed: u64, n: usize, dim: usize, classes: usize) -> BinarizedDataset {
    let mut r = rng(seed);
    let teacher: Vec<Vec<i32>> = (0..classes).map(|_| random_signs(&mut r, dim)).collect();
    let rows: Vec<Vec<i32>> = (0..n).map(|_| random_signs(&mut r, dim)).collect();
    let labels = rows
        .iter()
        .map(|x| {
            let scores: Vec<i32> = teacher.iter().map(|t| naive_dot(t, x)).collect();
            bmlp::model::argmax(&scores) as u8
        })
        .collect();
    let inputs = BitMatrix::from_fn(n, dim, |i, j| rows[i][j] > 0);
    BinarizedDataset::from_parts(inputs, labels, classes).unwrap()
}

pub fn naive_dot(a: &[i32], b: &[i32]) -> i32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unpack_matrix(m: &BitMatrix) -> Vec<Vec<i32>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.sign(r, c) as i32).collect()).collect()
}

/// Signs of a layer's hidden weights, one row per perceptron, from the
/// integer store rather than the packed cache.
pub fn hidden_signs(layer: &LayerState) -> Vec<Vec<i32>> {
    (0..layer.size()).map(|k| layer.hidden_column(k).iter().map(|&h| if h >= 0 { 1 } else { -1 }).collect()).collect()
}

pub struct NaiveLayer {
    pub pre: Vec<Vec<i32>>,
    pub act: Vec<Vec<i32>>,
    pub out: Vec<Vec<i32>>,
}

/// Unpacked integer forward pass used as the reference for the packed one.
pub fn naive_forward(net: &Network, input: &[Vec<i32>], clamp_bits: Option<u32>) -> Vec<NaiveLayer> {
    let mut a = input.to_vec();
    let mut layers = Vec::new();
    for layer in net.layers() {
        let w = hidden_signs(layer);
        let p = unpack_matrix(layer.classifier());
        let pre: Vec<Vec<i32>> = a
            .iter()
            .map(|x| {
                w.iter()
                    .map(|wk| {
                        let z = naive_dot(wk, x);
                        match clamp_bits {
                            Some(b) => {
                                let lim = (1i64 << (b - 1)) as i32 - 1;
                                z.clamp(-lim, lim)
                            }
                            None => z,
                        }
                    })
                    .collect()
            })
            .collect();
        let act: Vec<Vec<i32>> = pre.iter().map(|z| z.iter().map(|&v| if v >= 0 { 1 } else { -1 }).collect()).collect();
        let out = act.iter().map(|x| p.iter().map(|pc| naive_dot(pc, x)).collect()).collect();
        a = act.clone();
        layers.push(NaiveLayer { pre, act, out });
    }
    layers
}
