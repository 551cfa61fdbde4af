//! Network definition and the bit-packed forward pass.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;

use crate::bitcore::{clamp_preactivation, dot_words, sign_int, BitMatrix};
use crate::error::{Error, Result};
use crate::rng::PrngStream;

/// Centre of the empirically good group-size range [65, 85].
pub const GROUP_SIZE_TARGET: usize = 75;

/// Largest hidden-weight magnitude; odd so saturation keeps weights odd.
pub const HIDDEN_LIMIT: i8 = 127;

/// Robustness `r` as an exact fraction, so `τ < r·K` never rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Robustness {
    num: u32,
    den: u32,
}

impl Robustness {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 {
            return Err(Error::Config("robustness denominator is zero".into()));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    pub fn zero() -> Self {
        Self { num: 0, den: 1 }
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `margin < r·k`, exactly.
    #[inline]
    pub fn margin_too_small(self, margin: i64, k: usize) -> bool {
        (margin * self.den as i64) < self.num as i64 * k as i64
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl FromStr for Robustness {
    type Err = Error;

    /// Accepts `a/b` or a plain decimal such as `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid robustness {s:?}"));
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return Robustness::new(n, d);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 9 {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num =
            int.checked_mul(den).and_then(|v| v.checked_add(frac)).filter(|&v| v <= u32::MAX as u64).ok_or_else(bad)?;
        let g = gcd64(num, den);
        let (num, den) = (num / g, den / g);
        if den > u32::MAX as u64 {
            return Err(bad());
        }
        Robustness::new(num as u32, den as u32)
    }
}

fn gcd64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for Robustness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gamma {
    /// Per layer, the divisor of the layer size closest to 75.
    Auto,
    Fixed(usize),
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(Gamma::Auto),
            v => match v.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(Gamma::Fixed(n)),
                _ => Err(Error::Config(format!("invalid gamma {s:?}"))),
            },
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Auto => f.write_str("auto"),
            Gamma::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub epochs: u32,
    pub robustness: Robustness,
    /// Initial reinforcement probability.
    pub p_r0: f64,
    pub gamma: Gamma,
    pub seed: u64,
    /// Bound pre-activations to this many bits; `None` keeps them exact.
    pub clamp_bits: Option<u32>,
    pub share_classifier: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            batch_size: 100,
            epochs: 50,
            robustness: Robustness { num: 1, den: 4 },
            p_r0: 0.5,
            gamma: Gamma::Auto,
            seed: 0,
            clamp_bits: None,
            share_classifier: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_r0) {
            return Err(Error::Config(format!("reinforcement probability {} outside [0, 1]", self.p_r0)));
        }
        if let Some(bits) = self.clamp_bits {
            if !(2..=32).contains(&bits) {
                return Err(Error::Config(format!("clamp bits {bits} outside [2, 32]")));
            }
        }
        if self.gamma == Gamma::Fixed(0) {
            return Err(Error::Config("gamma must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolves the group size for each hidden layer size.
    pub fn group_sizes(&self, layer_sizes: &[usize]) -> Result<Vec<usize>> {
        layer_sizes
            .iter()
            .map(|&k| match self.gamma {
                Gamma::Auto => Ok(auto_group_size(k)),
                Gamma::Fixed(g) if g >= 1 && k % g == 0 => Ok(g),
                Gamma::Fixed(g) => Err(Error::Config(format!("group size {g} does not divide layer size {k}"))),
            })
            .collect()
    }
}

/// The divisor of `k` nearest to 75, ties going to the larger divisor.
pub fn auto_group_size(k: usize) -> usize {
    assert!(k >= 1, "layer size must be positive");
    let mut best: usize = 1;
    for d in 1..=k {
        if !k.is_multiple_of(d) {
            continue;
        }
        let (dist, best_dist) = (d.abs_diff(GROUP_SIZE_TARGET), best.abs_diff(GROUP_SIZE_TARGET));
        if dist < best_dist || (dist == best_dist && d > best) {
            best = d;
        }
    }
    best
}

/// One fully connected layer.
///
/// Hidden weights are stored perceptron-major: the `K_prev` incoming weights
/// of perceptron `k` occupy `hidden[k*K_prev .. (k+1)*K_prev]`. Row `k` of
/// `weights` is the packed sign of that slice.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    k_prev: usize,
    k: usize,
    hidden: Vec<i8>,
    weights: BitMatrix,
    classifier: Arc<BitMatrix>,
}

impl LayerState {
    /// Builds a layer from hidden weights (perceptron-major) and a classifier.
    pub fn from_parts(k_prev: usize, k: usize, hidden: Vec<i8>, classifier: Arc<BitMatrix>) -> Result<Self> {
        if hidden.len() != k_prev * k {
            return Err(Error::Shape(format!("{} hidden weights for a {k_prev}x{k} layer", hidden.len())));
        }
        if classifier.cols() != k {
            return Err(Error::Shape(format!(
                "classifier has {} columns, layer has {k} perceptrons",
                classifier.cols()
            )));
        }
        let mut layer = Self { k_prev, k, hidden, weights: BitMatrix::negative(k, k_prev), classifier };
        layer.validate_hidden()?;
        layer.refresh_binary_weights(None);
        Ok(layer)
    }

    pub fn input_size(&self) -> usize {
        self.k_prev
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn hidden(&self) -> &[i8] {
        &self.hidden
    }

    pub(crate) fn hidden_mut(&mut self) -> &mut [i8] {
        &mut self.hidden
    }

    /// Incoming hidden weights of perceptron `k`.
    pub fn hidden_column(&self, k: usize) -> &[i8] {
        &self.hidden[k * self.k_prev..(k + 1) * self.k_prev]
    }

    pub fn hidden_column_mut(&mut self, k: usize) -> &mut [i8] {
        &mut self.hidden[k * self.k_prev..(k + 1) * self.k_prev]
    }

    /// `H[i][k]`: weight from input `i` to perceptron `k`.
    pub fn h(&self, i: usize, k: usize) -> i8 {
        self.hidden[k * self.k_prev + i]
    }

    pub fn weights(&self) -> &BitMatrix {
        &self.weights
    }

    pub fn classifier(&self) -> &BitMatrix {
        &self.classifier
    }

    pub fn classifier_arc(&self) -> &Arc<BitMatrix> {
        &self.classifier
    }

    /// Re-derives packed weight rows from the hidden weights, for the given
    /// perceptrons or for all of them.
    pub fn refresh_binary_weights(&mut self, touched: Option<&[usize]>) {
        match touched {
            Some(ks) => {
                for &k in ks {
                    self.refresh_row(k);
                }
            }
            None => {
                for k in 0..self.k {
                    self.refresh_row(k);
                }
            }
        }
    }

    fn refresh_row(&mut self, k: usize) {
        let col = &self.hidden[k * self.k_prev..(k + 1) * self.k_prev];
        let row = self.weights.row_words_mut(k);
        for (w, chunk) in row.iter_mut().zip(col.chunks(64)) {
            let mut bits = 0u64;
            for (b, &h) in chunk.iter().enumerate() {
                bits |= ((h > 0) as u64) << b;
            }
            *w = bits;
        }
    }

    /// Every hidden weight odd with magnitude at most 127.
    pub fn validate_hidden(&self) -> Result<()> {
        if let Some(pos) = self.hidden.iter().position(|&h| h % 2 == 0 || h < -HIDDEN_LIMIT) {
            return Err(Error::Validation(format!(
                "hidden weight {} at position {pos} is not odd within [-127, 127]",
                self.hidden[pos]
            )));
        }
        Ok(())
    }

    /// Packed weights agree with the signs of the hidden weights.
    pub fn weights_in_sync(&self) -> bool {
        (0..self.k).all(|k| self.hidden_column(k).iter().enumerate().all(|(i, &h)| self.weights.get(k, i) == (h > 0)))
    }
}

/// A binary multi-layer perceptron with one local classifier per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_dim: usize,
    classes: usize,
    layers: Vec<LayerState>,
}

impl Network {
    /// Random ±1 hidden weights and classifiers drawn from `rng`.
    ///
    /// `dims` is `[K0, K1, .., KL]`. Draw order is layer by layer, hidden
    /// weights (perceptron-major) before the classifier; a shared classifier
    /// is drawn once, with the first layer.
    pub fn init(dims: &[usize], classes: usize, hyper: &Hyperparams, rng: &mut PrngStream) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("need an input size and at least one layer".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("zero-sized dimension in {dims:?}")));
        }
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
        }
        if hyper.share_classifier && dims[1..].windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config(format!("a shared classifier needs equal layer sizes, got {:?}", &dims[1..])));
        }

        let mut bits = BitSource::new(rng);
        let mut shared: Option<Arc<BitMatrix>> = None;
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (k_prev, k) = (w[0], w[1]);
            let hidden: Vec<i8> = (0..k_prev * k).map(|_| if bits.next() { 1 } else { -1 }).collect();
            let classifier = match &shared {
                Some(p) => Arc::clone(p),
                None => {
                    let p = Arc::new(BitMatrix::from_fn(classes, k, |_, _| bits.next()));
                    if hyper.share_classifier {
                        shared = Some(Arc::clone(&p));
                    }
                    p
                }
            };
            layers.push(LayerState::from_parts(k_prev, k, hidden, classifier)?);
        }
        Ok(Self { input_dim: dims[0], classes, layers })
    }

    pub fn from_layers(input_dim: usize, classes: usize, layers: Vec<LayerState>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network without layers".into()));
        }
        let mut prev = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.input_size() != prev {
                return Err(Error::Shape(format!(
                    "layer {} expects {} inputs, previous size is {prev}",
                    l + 1,
                    layer.input_size()
                )));
            }
            if layer.classifier().rows() != classes {
                return Err(Error::Shape(format!(
                    "layer {} classifier has {} rows for {classes} classes",
                    l + 1,
                    layer.classifier().rows()
                )));
            }
            prev = layer.size();
        }
        Ok(Self { input_dim, classes, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerState] {
        &mut self.layers
    }

    /// `[K0, K1, .., KL]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim).chain(self.layers.iter().map(|l| l.size())).collect()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.size()).collect()
    }

    /// Hidden weights plus classifier entries.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.input_size() * l.size() + self.classes * l.size()).sum()
    }

    /// True when every layer holds the same classifier allocation.
    pub fn shares_classifier(&self) -> bool {
        self.layers.len() > 1
            && self.layers.windows(2).all(|w| Arc::ptr_eq(w[0].classifier_arc(), w[1].classifier_arc()))
    }

    /// Runs every layer on a batch of packed inputs (one row per pattern).
    pub fn forward(&self, input: &BitMatrix, clamp_bits: Option<u32>) -> Result<ForwardTrace> {
        if input.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.cols(),
                self.input_dim
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut counts = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let prev = layers.last().map_or(input, |t: &LayerTrace| &t.act);
            let (trace, ops) = layer_forward(layer, prev, clamp_bits);
            layers.push(trace);
            counts.push(ops);
        }
        Ok(ForwardTrace { input: input.clone(), layers, counts })
    }

    /// Class predicted by the last layer's classifier for each pattern.
    pub fn predict(&self, input: &BitMatrix) -> Result<Vec<usize>> {
        let trace = self.forward(input, None)?;
        let last = trace.layers.last().expect("network has layers");
        Ok((0..input.rows()).map(|mu| argmax(last.output(mu))).collect())
    }
}

/// Draws single bits from 64-bit outputs, low bit first.
struct BitSource<'a> {
    rng: &'a mut PrngStream,
    word: u64,
    left: u32,
}

impl<'a> BitSource<'a> {
    fn new(rng: &'a mut PrngStream) -> Self {
        Self { rng, word: 0, left: 0 }
    }

    fn next(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        let b = self.word & 1 == 1;
        self.word >>= 1;
        self.left -= 1;
        b
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[i32]) -> usize {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    best
}

/// XNOR / popcount / increment tallies for one layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Single-bit XNORs (one per pair of ±1 entries multiplied).
    pub xnor: u64,
    /// Popcount reductions (one per dot product).
    pub popcount: u64,
    /// Unit increments/decrements of hidden weights (a ±2 step counts twice).
    pub increments: u64,
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.xnor += o.xnor;
        self.popcount += o.popcount;
        self.increments += o.increments;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    k: usize,
    classes: usize,
    /// Pre-activations, `bs × K` row-major.
    pub pre: Vec<i32>,
    pub act: BitMatrix,
    /// Local classifier outputs, `bs × c` row-major.
    pub out: Vec<i32>,
}

impl LayerTrace {
    pub fn preactivation(&self, mu: usize) -> &[i32] {
        &self.pre[mu * self.k..(mu + 1) * self.k]
    }

    pub fn output(&self, mu: usize) -> &[i32] {
        &self.out[mu * self.classes..(mu + 1) * self.classes]
    }
}

/// Everything a forward pass produced for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: BitMatrix,
    pub layers: Vec<LayerTrace>,
    /// Forward operation counts per layer.
    pub counts: Vec<OpCounts>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    /// Activations feeding layer `l` (0-based): the input for `l = 0`.
    pub fn layer_input(&self, l: usize) -> &BitMatrix {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].act
        }
    }
}

fn layer_forward(layer: &LayerState, prev: &BitMatrix, clamp_bits: Option<u32>) -> (LayerTrace, OpCounts) {
    let bs = prev.rows();
    let (k, k_prev) = (layer.size(), layer.input_size());
    let classes = layer.classifier().rows();
    let mut pre = vec![0i32; bs * k];
    let mut out = vec![0i32; bs * classes];
    let mut act = BitMatrix::negative(bs, k);
    let stride = act.stride();

    let (dots, xnor) = pre
        .par_chunks_mut(k.max(1))
        .zip(out.par_chunks_mut(classes))
        .zip(act.words_mut().par_chunks_mut(stride.max(1)))
        .enumerate()
        .map(|(mu, ((z, y), a))| {
            let x = prev.row_words(mu);
            let w = layer.weights();
            for (kk, zk) in z.iter_mut().enumerate() {
                let mut v = dot_words(x, w.row_words(kk), k_prev);
                if let Some(bits) = clamp_bits {
                    v = clamp_preactivation(v, bits);
                }
                *zk = v;
                if sign_int(v as i64) > 0 {
                    a[kk / 64] |= 1 << (kk % 64);
                }
            }
            let p = layer.classifier();
            for (j, yj) in y.iter_mut().enumerate() {
                *yj = dot_words(a, p.row_words(j), k);
            }
            ((z.len() + y.len()) as u64, (z.len() * k_prev + y.len() * k) as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let ops = OpCounts { xnor, popcount: dots, increments: 0 };
    (LayerTrace { k, classes, pre, act, out }, ops)
}
