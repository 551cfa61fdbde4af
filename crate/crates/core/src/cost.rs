//! Per-pattern operation counts and bit widths.
//!
//! Forward, per layer: `K_l(K_{l-1} + c)` XNORs and `K_l + c` popcounts.
//! Backward worst case: `K_l(1 + K_{l-1}/γ)` XNORs (stabilities plus the
//! CP step of one perceptron per group) and `2·K_l·K_{l-1}/γ` unit
//! increments. Activations and binary weights take 1 bit, hidden weights 8.

use crate::error::{Error, Result};
use crate::model::{Gamma, Hyperparams};

pub const ACTIVATION_BITS: u64 = 1;
pub const BINARY_WEIGHT_BITS: u64 = 1;
pub const HIDDEN_WEIGHT_BITS: u64 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub input_size: u64,
    pub size: u64,
    pub group_size: u64,
    pub forward_xnor: u64,
    pub forward_popcount: u64,
    pub backward_xnor: u64,
    pub backward_increments: u64,
    /// Bits for activations plus binary weights (forward pass).
    pub forward_bits: u64,
    /// Bits for activations plus hidden weights (backward pass).
    pub backward_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub classes: u64,
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    pub fn total_forward_xnor(&self) -> u64 {
        self.layers.iter().map(|l| l.forward_xnor).sum()
    }

    pub fn total_forward_popcount(&self) -> u64 {
        self.layers.iter().map(|l| l.forward_popcount).sum()
    }

    pub fn total_backward_xnor(&self) -> u64 {
        self.layers.iter().map(|l| l.backward_xnor).sum()
    }

    pub fn total_backward_increments(&self) -> u64 {
        self.layers.iter().map(|l| l.backward_increments).sum()
    }
}

/// Cost of one input pattern through a network with `dims = [K0, .., KL]`.
pub fn cost_model(dims: &[usize], classes: usize, gamma: Gamma) -> Result<CostReport> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Config(format!("invalid dims {dims:?}")));
    }
    let hyper = Hyperparams { gamma, ..Hyperparams::default() };
    let groups = hyper.group_sizes(&dims[1..])?;
    let c = classes as u64;
    let layers = dims
        .windows(2)
        .zip(groups)
        .map(|(w, g)| {
            let (kp, k, g) = (w[0] as u64, w[1] as u64, g as u64);
            let cp_weights = k / g * kp;
            LayerCost {
                input_size: kp,
                size: k,
                group_size: g,
                forward_xnor: k * (kp + c),
                forward_popcount: k + c,
                backward_xnor: k + cp_weights,
                backward_increments: 2 * cp_weights,
                forward_bits: k * ACTIVATION_BITS + k * kp * BINARY_WEIGHT_BITS,
                backward_bits: k * ACTIVATION_BITS + k * kp * HIDDEN_WEIGHT_BITS,
            }
        })
        .collect();
    Ok(CostReport { classes: c, layers })
}
