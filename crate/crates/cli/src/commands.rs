use std::io::Write;
use std::path::Path;

use bmlp::cost::{cost_model, ACTIVATION_BITS, BINARY_WEIGHT_BITS, HIDDEN_WEIGHT_BITS};
use bmlp::rng::{stream, Purpose};
use bmlp::train::{evaluate, fit, EvalSchedule};
use bmlp::{persist, BinarizedDataset, EpochMetrics, Gamma, Network, TrainState};

use crate::config::RunConfig;
use crate::dataset::load_datasets;
use crate::error::{CliError, Result};
use crate::metrics::MetricsWriter;

fn emit(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(line).and_then(|_| out.write_all(b"\n")).map_err(|e| CliError::io("<output>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { emit($out, format_args!($($arg)*)) };
}

pub struct TrainOutcome {
    pub net: Network,
    pub state: TrainState,
    pub history: Vec<EpochMetrics>,
    pub group_sizes: Vec<usize>,
}

impl TrainOutcome {
    /// Final-layer test accuracy of the last epoch, if it was evaluated.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.last().and_then(|m| m.final_test_accuracy())
    }
}

/// Loads the configured data and trains.
pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainOutcome> {
    let data = load_datasets(cfg)?;
    train_on(cfg, &data.train, data.test.as_ref(), out)
}

/// Trains on already binarized data, writing metrics and the checkpoint
/// named in `cfg`. Progress goes to `out` as `key=value` lines.
pub fn train_on(
    cfg: &RunConfig,
    train: &BinarizedDataset,
    test: Option<&BinarizedDataset>,
    out: &mut dyn Write,
) -> Result<TrainOutcome> {
    let hyper = &cfg.hyper;
    hyper.validate()?;
    let (mut net, mut state) = match &cfg.resume {
        Some(path) => {
            let (net, state, _) = persist::load(path)?;
            say!(out, "resume={} epoch={} p_r={}", path.display(), state.epoch, state.p_r)?;
            (net, state)
        }
        None => {
            let classes = cfg.classes.unwrap_or(train.classes());
            let net = Network::init(&cfg.dims, classes, hyper, &mut stream(hyper.seed, Purpose::Init))?;
            (net, TrainState::new(hyper))
        }
    };
    if net.input_dim() != train.features() {
        return Err(bmlp::Error::Shape(format!(
            "network input size {} but dataset has {} features",
            net.input_dim(),
            train.features()
        ))
        .into());
    }
    let group_sizes = hyper.group_sizes(&net.layer_sizes())?;
    for (l, g) in group_sizes.iter().enumerate() {
        say!(out, "layer={} size={} gamma={}", l + 1, net.layer_sizes()[l], g)?;
    }

    let mut metrics = cfg.metrics.as_deref().map(|p| MetricsWriter::create(p, cfg.timing)).transpose()?;
    let mut history = Vec::new();
    while state.epoch < hyper.epochs {
        let mut step = hyper.clone();
        step.epochs = state.epoch + 1;
        let last = step.epochs == hyper.epochs;
        let eval_set = if cfg.eval_every || last { test } else { None };
        let m = fit(&mut net, train, eval_set, &step, &mut state, EvalSchedule::EveryEpoch, |_| {})?
            .pop()
            .expect("one epoch trained");
        if let Some(w) = metrics.as_mut() {
            w.record(&m)?;
        }
        let acc = m.final_test_accuracy().map(|a| format!(" test_accuracy={a}")).unwrap_or_default();
        say!(out, "epoch={} p_r={} E={}{} wall_ms={}", m.epoch + 1, m.p_r, m.error_fraction, acc, m.wall_ms)?;
        history.push(m);
    }
    if let Some(path) = &cfg.checkpoint {
        persist::save(&net, &state, hyper, path)?;
        say!(out, "checkpoint={}", path.display())?;
    }
    Ok(TrainOutcome { net, state, history, group_sizes })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    /// Local-classifier accuracy per layer; the last is the network's.
    pub layer_accuracy: Vec<f64>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        *self.layer_accuracy.last().expect("at least one layer")
    }

    pub fn write_to(&self, out: &mut dyn Write) -> Result<()> {
        say!(out, "samples={}", self.samples)?;
        for (l, a) in self.layer_accuracy.iter().enumerate() {
            say!(out, "layer={} accuracy={}", l + 1, a)?;
        }
        say!(out, "accuracy={}", self.accuracy())
    }
}

/// Evaluates a checkpoint on the test split named by `cfg`.
pub fn eval(checkpoint: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    let (net, _, hyper) = persist::load(checkpoint)?;
    let data = load_datasets(cfg)?;
    let test = data.test.ok_or_else(|| CliError::Config("evaluation needs a test split".into()))?;
    eval_on(&net, hyper.clamp_bits, &test)
}

pub fn eval_on(net: &Network, clamp_bits: Option<u32>, test: &BinarizedDataset) -> Result<EvalReport> {
    if test.classes() > net.classes() {
        return Err(bmlp::Error::Shape(format!(
            "dataset has {} classes, checkpoint has {}",
            test.classes(),
            net.classes()
        ))
        .into());
    }
    Ok(EvalReport { samples: test.len(), layer_accuracy: evaluate(net, test, clamp_bits)? })
}

/// Prints per-layer and total per-pattern operation counts and bit widths.
pub fn cost_report(dims: &[usize], classes: usize, gamma: Gamma, out: &mut dyn Write) -> Result<()> {
    let r = cost_model(dims, classes, gamma)?;
    say!(
        out,
        "bits activation={} binary_weight={} hidden_weight={}",
        ACTIVATION_BITS,
        BINARY_WEIGHT_BITS,
        HIDDEN_WEIGHT_BITS
    )?;
    for (l, c) in r.layers.iter().enumerate() {
        say!(
            out,
            "layer={} input={} size={} gamma={} forward_xnor={} forward_popcount={} backward_xnor={} backward_increments={} forward_bits={} backward_bits={}",
            l + 1,
            c.input_size,
            c.size,
            c.group_size,
            c.forward_xnor,
            c.forward_popcount,
            c.backward_xnor,
            c.backward_increments,
            c.forward_bits,
            c.backward_bits
        )?;
    }
    say!(
        out,
        "total forward_xnor={} forward_popcount={} backward_xnor={} backward_increments={}",
        r.total_forward_xnor(),
        r.total_forward_popcount(),
        r.total_backward_xnor(),
        r.total_backward_increments()
    )
}
