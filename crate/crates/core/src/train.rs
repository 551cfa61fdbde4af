//! Local-error training: pattern selection per layer, easiest-perceptron
//! selection per group, clipped-perceptron steps and reinforcement.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::bitcore::{BitMatrix, BitVector};
use crate::data::{self, BinarizedDataset};
use crate::error::{Error, Result};
use crate::model::{
    argmax, ForwardTrace, Hyperparams, LayerState, LayerTrace, Network, OpCounts, Robustness, HIDDEN_LIMIT,
};
use crate::rng::{self, PrngStream, Purpose};

/// Mutable training progress that survives checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Current reinforcement probability.
    pub p_r: f64,
    /// Number of completed epochs.
    pub epoch: u32,
    /// Final-layer training error fraction of the last completed epoch.
    pub error_fraction: f64,
}

impl TrainState {
    pub fn new(hyper: &Hyperparams) -> Self {
        Self { p_r: hyper.p_r0, epoch: 0, error_fraction: 1.0 }
    }
}

/// 0 when the top-scoring class (lowest index on ties) is `label`, else 1.
pub fn zero_one_loss(yhat: &[i32], label: usize) -> Result<u8> {
    if label >= yhat.len() {
        return Err(Error::InvalidInput(format!("label {label} out of range for {} classes", yhat.len())));
    }
    Ok((argmax(yhat) != label) as u8)
}

/// Gap between the highest and second-highest scores.
pub fn margin(yhat: &[i32]) -> i32 {
    debug_assert!(yhat.len() >= 2);
    let (mut top, mut second) = (i32::MIN, i32::MIN);
    for &v in yhat {
        if v > top {
            second = top;
            top = v;
        } else if v > second {
            second = v;
        }
    }
    top - second
}

/// Whether a pattern needs updating in a layer of size `k`: misclassified,
/// or classified with margin below `r·k`.
#[inline]
pub fn needs_update(yhat: &[i32], label: usize, r: Robustness, k: usize) -> bool {
    argmax(yhat) != label || r.margin_too_small(margin(yhat) as i64, k)
}

/// Per layer, the ascending indices of patterns that need updating.
pub fn build_update_set(trace: &ForwardTrace, labels: &[u8], r: Robustness) -> Result<Vec<Vec<usize>>> {
    if labels.len() != trace.batch_size() {
        return Err(Error::Shape(format!("{} labels for a batch of {}", labels.len(), trace.batch_size())));
    }
    Ok(trace
        .layers
        .iter()
        .map(|lt| {
            let k = lt.act.cols();
            (0..labels.len()).filter(|&mu| needs_update(lt.output(mu), labels[mu] as usize, r, k)).collect()
        })
        .collect())
}

/// `δ_k = z_k·ρ_k` for the true-class classifier row `ρ`.
pub fn stabilities(z: &[i32], rho: &BitVector) -> Result<Vec<i32>> {
    if z.len() != rho.len() {
        return Err(Error::Shape(format!("{} pre-activations against a classifier row of {}", z.len(), rho.len())));
    }
    Ok(z.iter().enumerate().map(|(k, &v)| v * rho.sign(k) as i32).collect())
}

/// Splits `delta` into contiguous groups of `gamma` and returns, per group,
/// `(group, k)` for the strictly negative stability closest to zero (lowest
/// index on ties). Groups without a negative entry contribute nothing.
pub fn select_easiest(delta: &[i32], gamma: usize) -> Result<Vec<(usize, usize)>> {
    if gamma == 0 || !delta.len().is_multiple_of(gamma) {
        return Err(Error::Config(format!("group size {gamma} does not divide layer size {}", delta.len())));
    }
    let mut picks = Vec::new();
    select_easiest_into(delta, gamma, |g, k| picks.push((g, k)));
    Ok(picks)
}

#[inline]
fn select_easiest_into(delta: &[i32], gamma: usize, mut emit: impl FnMut(usize, usize)) {
    for (g, group) in delta.chunks_exact(gamma).enumerate() {
        let mut best: Option<(usize, i32)> = None;
        for (j, &d) in group.iter().enumerate() {
            if d < 0 && best.is_none_or(|(_, b)| d > b) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            emit(g, g * gamma + j);
        }
    }
}

/// Clipped-perceptron step: `h ← h + 2·a·ρ`, saturating at ±127.
pub fn cp_update(h: &mut [i8], a_prev: &BitVector, rho: i8) -> Result<()> {
    if h.len() != a_prev.len() {
        return Err(Error::Shape(format!("{} hidden weights against {} inputs", h.len(), a_prev.len())));
    }
    let signs: Vec<i8> = (0..a_prev.len()).map(|i| a_prev.sign(i)).collect();
    cp_update_signs(h, &signs, rho);
    Ok(())
}

#[inline]
fn cp_update_signs(h: &mut [i8], signs: &[i8], rho: i8) {
    let step = 2 * rho;
    for (w, &s) in h.iter_mut().zip(signs) {
        *w = w.saturating_add(s * step).max(-HIDDEN_LIMIT);
    }
}

fn unpack_row(words: &[u64], len: usize, out: &mut Vec<i8>) {
    out.clear();
    out.extend((0..len).map(|i| ((words[i / 64] >> (i % 64)) & 1) as i8 * 2 - 1));
}

/// Per-weight reinforcement probability `p_r·√(2/(π·K))`.
pub fn reinforcement_probability(p_r: f64, layer_size: usize) -> f64 {
    p_r * (2.0 / (std::f64::consts::PI * layer_size as f64)).sqrt()
}

/// Moves each hidden weight of the layer two steps away from zero with
/// probability [`reinforcement_probability`]. Returns how many moved.
///
/// The Bernoulli trials are realised by geometric skipping over the weights
/// in storage order, which has the same distribution as one uniform draw per
/// weight. Signs never change, so the packed weights stay valid.
pub fn reinforce(layer: &mut LayerState, p_r: f64, rng: &mut PrngStream) -> usize {
    let q = reinforcement_probability(p_r, layer.size());
    let hidden = layer.hidden_mut();
    let n = hidden.len();
    if q.is_nan() || q <= 0.0 {
        return 0;
    }
    if q >= 1.0 {
        hidden.iter_mut().for_each(reinforce_one);
        return n;
    }
    let log_miss = (-q).ln_1p();
    let mut i = 0usize;
    let mut moved = 0;
    loop {
        let u: f64 = rng.gen();
        let skip = ((1.0 - u).ln() / log_miss).floor();
        if skip >= (n - i) as f64 {
            break;
        }
        i += skip as usize;
        reinforce_one(&mut hidden[i]);
        moved += 1;
        i += 1;
        if i >= n {
            break;
        }
    }
    moved
}

#[inline]
fn reinforce_one(h: &mut i8) {
    *h = if *h > 0 { h.saturating_add(2) } else { h.saturating_sub(2).max(-HIDDEN_LIMIT) };
}

/// End-of-epoch schedule: `p_r ← p_r·√E`.
pub fn rescale_pr(state: &mut TrainState) {
    debug_assert!((0.0..=1.0).contains(&state.error_fraction));
    state.p_r *= state.error_fraction.sqrt();
}

/// What one layer did with one batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerBatchReport {
    /// Patterns the local classifier got wrong.
    pub local_errors: usize,
    /// Patterns that failed the margin test (|M|).
    pub flagged: usize,
    /// Clipped-perceptron steps applied (|U|).
    pub cp_updates: usize,
    /// Upper bound on `cp_updates`: groups × batch size.
    pub cp_bound: usize,
    pub reinforced: usize,
    /// Backward operation counts.
    pub backward: OpCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    pub epoch: u32,
    pub batch: u32,
    pub size: usize,
    pub layers: Vec<LayerBatchReport>,
    /// Forward operation counts per layer.
    pub forward: Vec<OpCounts>,
}

/// One mini-batch of training.
///
/// The forward trace is taken on the weights as they stand at batch start;
/// each layer is then updated from its own slice of the trace, so layers are
/// independent and run in parallel. Reinforcement randomness for layer `l`
/// comes from the `(seed, l, epoch, batch)` substream.
#[allow(clippy::too_many_arguments)]
pub fn train_batch(
    net: &mut Network,
    input: &BitMatrix,
    labels: &[u8],
    hyper: &Hyperparams,
    group_sizes: &[usize],
    p_r: f64,
    epoch: u32,
    batch: u32,
) -> Result<BatchReport> {
    if labels.len() != input.rows() {
        return Err(Error::Shape(format!("{} labels for {} patterns", labels.len(), input.rows())));
    }
    if group_sizes.len() != net.layers().len() {
        return Err(Error::Config("one group size per layer required".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y as usize >= net.classes()) {
        return Err(Error::InvalidInput(format!("label {y} out of range for {} classes", net.classes())));
    }
    let trace = net.forward(input, hyper.clamp_bits)?;
    let ForwardTrace { input: a0, layers: traces, counts } = trace;

    let layers = net.layers_mut();
    let reports: Vec<LayerBatchReport> = layers
        .par_iter_mut()
        .enumerate()
        .map(|(l, layer)| {
            let prev = if l == 0 { &a0 } else { &traces[l - 1].act };
            let mut rng = rng::stream(hyper.seed, Purpose::Reinforce { layer: l as u32, epoch, batch });
            update_layer(layer, prev, &traces[l], labels, hyper.robustness, group_sizes[l], p_r, &mut rng)
        })
        .collect();

    Ok(BatchReport { epoch, batch, size: labels.len(), layers: reports, forward: counts })
}

#[allow(clippy::too_many_arguments)]
fn update_layer(
    layer: &mut LayerState,
    prev: &BitMatrix,
    trace: &LayerTrace,
    labels: &[u8],
    r: Robustness,
    gamma: usize,
    p_r: f64,
    rng: &mut PrngStream,
) -> LayerBatchReport {
    let (k, k_prev) = (layer.size(), layer.input_size());
    let groups = k / gamma;
    let mut report = LayerBatchReport { cp_bound: groups * labels.len(), ..Default::default() };

    let mut touched = vec![false; k];
    let mut delta = vec![0i32; k];
    let mut signs = Vec::with_capacity(k_prev);
    let mut picks = Vec::with_capacity(groups);
    let classifier = Arc::clone(layer.classifier_arc());

    for (mu, &y) in labels.iter().enumerate() {
        let y = y as usize;
        let yhat = trace.output(mu);
        if argmax(yhat) != y {
            report.local_errors += 1;
        } else if !r.margin_too_small(margin(yhat) as i64, k) {
            continue;
        }
        report.flagged += 1;

        let rho = classifier.row_words(y);
        for (kk, (d, &z)) in delta.iter_mut().zip(trace.preactivation(mu)).enumerate() {
            let positive = (rho[kk / 64] >> (kk % 64)) & 1 == 1;
            *d = if positive { z } else { -z };
        }
        report.backward.xnor += k as u64;

        picks.clear();
        select_easiest_into(&delta, gamma, |_, kk| picks.push(kk));
        if picks.is_empty() {
            continue;
        }
        unpack_row(prev.row_words(mu), k_prev, &mut signs);
        for &kk in &picks {
            let rho_k = if (rho[kk / 64] >> (kk % 64)) & 1 == 1 { 1 } else { -1 };
            cp_update_signs(layer.hidden_column_mut(kk), &signs, rho_k);
            touched[kk] = true;
        }
        report.cp_updates += picks.len();
        report.backward.xnor += (picks.len() * k_prev) as u64;
        report.backward.increments += (2 * picks.len() * k_prev) as u64;
    }

    let touched: Vec<usize> = touched.iter().enumerate().filter(|(_, &t)| t).map(|(i, _)| i).collect();
    layer.refresh_binary_weights(Some(&touched));
    report.reinforced = reinforce(layer, p_r, rng);
    report
}

/// Per-layer totals for one epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerEpochMetrics {
    /// Training patterns misclassified by this layer's local classifier.
    pub local_error_rate: f64,
    pub flagged: usize,
    pub cp_updates: usize,
    pub max_batch_cp_updates: usize,
    pub reinforced: usize,
    /// Local-classifier accuracy on the evaluation set, when one was given.
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// Zero-based epoch index.
    pub epoch: u32,
    /// Reinforcement probability in effect during the epoch.
    pub p_r: f64,
    /// Final-layer training error fraction.
    pub error_fraction: f64,
    pub layers: Vec<LayerEpochMetrics>,
    pub wall_ms: u64,
}

impl EpochMetrics {
    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.layers.last().and_then(|l| l.test_accuracy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSchedule {
    EveryEpoch,
    FinalEpoch,
}

pub enum FitEvent<'a> {
    Batch(&'a BatchReport),
    Epoch(&'a EpochMetrics),
}

/// Trains `net` from `state.epoch` up to `hyper.epochs`.
pub fn fit(
    net: &mut Network,
    train: &BinarizedDataset,
    test: Option<&BinarizedDataset>,
    hyper: &Hyperparams,
    state: &mut TrainState,
    schedule: EvalSchedule,
    mut observe: impl FnMut(FitEvent<'_>),
) -> Result<Vec<EpochMetrics>> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_dataset(net, train)?;
    if let Some(t) = test {
        check_dataset(net, t)?;
    }
    let group_sizes = hyper.group_sizes(&net.layer_sizes())?;
    let mut history = Vec::new();
    let n = train.len();
    let n_layers = net.layers().len();

    while state.epoch < hyper.epochs {
        let epoch = state.epoch;
        let started = Instant::now();
        let mut layers = vec![LayerEpochMetrics::default(); n_layers];
        let mut local_errors = vec![0usize; n_layers];

        for (b, idx) in data::batches(n, hyper.batch_size, hyper.seed, epoch).iter().enumerate() {
            let input = train.inputs().select_rows(idx);
            let labels: Vec<u8> = idx.iter().map(|&i| train.labels()[i]).collect();
            let report = train_batch(net, &input, &labels, hyper, &group_sizes, state.p_r, epoch, b as u32)?;
            for (l, lr) in report.layers.iter().enumerate() {
                local_errors[l] += lr.local_errors;
                layers[l].flagged += lr.flagged;
                layers[l].cp_updates += lr.cp_updates;
                layers[l].reinforced += lr.reinforced;
                layers[l].max_batch_cp_updates = layers[l].max_batch_cp_updates.max(lr.cp_updates);
            }
            observe(FitEvent::Batch(&report));
        }

        for (m, &e) in layers.iter_mut().zip(&local_errors) {
            m.local_error_rate = e as f64 / n as f64;
        }
        let error_fraction = local_errors[n_layers - 1] as f64 / n as f64;

        let last = epoch + 1 == hyper.epochs;
        if let Some(t) = test {
            if schedule == EvalSchedule::EveryEpoch || last {
                let acc = evaluate(net, t, hyper.clamp_bits)?;
                for (m, a) in layers.iter_mut().zip(acc) {
                    m.test_accuracy = Some(a);
                }
            }
        }

        let metrics = EpochMetrics {
            epoch,
            p_r: state.p_r,
            error_fraction,
            layers,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        state.error_fraction = error_fraction;
        rescale_pr(state);
        state.epoch += 1;
        observe(FitEvent::Epoch(&metrics));
        history.push(metrics);
    }
    Ok(history)
}

fn check_dataset(net: &Network, ds: &BinarizedDataset) -> Result<()> {
    if ds.features() != net.input_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features, network expects {}",
            ds.features(),
            net.input_dim()
        )));
    }
    if ds.classes() > net.classes() {
        return Err(Error::Shape(format!("dataset has {} classes, network has {}", ds.classes(), net.classes())));
    }
    Ok(())
}

/// Accuracy of every layer's local classifier; the last entry is the
/// network's accuracy.
pub fn evaluate(net: &Network, ds: &BinarizedDataset, clamp_bits: Option<u32>) -> Result<Vec<f64>> {
    check_dataset(net, ds)?;
    const CHUNK: usize = 1000;
    let mut correct = vec![0usize; net.layers().len()];
    let all: Vec<usize> = (0..ds.len()).collect();
    for idx in all.chunks(CHUNK) {
        let trace = net.forward(&ds.inputs().select_rows(idx), clamp_bits)?;
        for (l, lt) in trace.layers.iter().enumerate() {
            correct[l] +=
                idx.iter().enumerate().filter(|&(mu, &i)| argmax(lt.output(mu)) == ds.labels()[i] as usize).count();
        }
    }
    Ok(correct.iter().map(|&c| c as f64 / ds.len().max(1) as f64).collect())
}
