//! One-hidden-layer feed-forward network: `input -> relu(hidden) -> output`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{add_column_sums, add_row_bias, gemm};
use super::weights::{Segment, WeightStore};

pub const DEFAULT_HIDDEN: usize = 75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OlffConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub output: usize,
}

/// Trainable parameter count `in*h + h + h*out + out`.
pub fn olff_weight_count(input_dim: usize, hidden: usize, output: usize) -> usize {
    input_dim * hidden + hidden + hidden * output + output
}

impl OlffConfig {
    pub fn weight_count(&self) -> usize {
        olff_weight_count(self.input_dim, self.hidden, self.output)
    }

    pub(crate) fn layout(&self) -> WeightStore {
        WeightStore::from_segments(vec![
            Segment::new("hidden.weight", vec![self.hidden, self.input_dim]),
            Segment::new("hidden.bias", vec![self.hidden]),
            Segment::new("output.weight", vec![self.output, self.hidden]),
            Segment::new("output.bias", vec![self.output]),
        ])
    }

    /// He-uniform hidden layer, Glorot-uniform output layer, zero biases.
    pub(crate) fn initialize(&self, store: &mut WeightStore, rng: &mut ChaCha8Rng) {
        let he = (6.0 / self.input_dim as f64).sqrt();
        for w in store.segment_mut("hidden.weight") {
            *w = rng.random_range(-he..he);
        }
        let glorot = (6.0 / (self.hidden + self.output) as f64).sqrt();
        for w in store.segment_mut("output.weight") {
            *w = rng.random_range(-glorot..glorot);
        }
    }
}

struct Views<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

fn split<'a>(cfg: &OlffConfig, w: &'a [f64]) -> Views<'a> {
    let (w1, rest) = w.split_at(cfg.hidden * cfg.input_dim);
    let (b1, rest) = rest.split_at(cfg.hidden);
    let (w2, b2) = rest.split_at(cfg.output * cfg.hidden);
    Views { w1, b1, w2, b2 }
}

/// Returns `(pre-activations, outputs)` for a row-major `batch x input` block.
fn forward_internal(cfg: &OlffConfig, w: &[f64], x: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let v = split(cfg, w);
    let mut z1 = vec![0.0; batch * cfg.hidden];
    gemm(batch, cfg.input_dim, cfg.hidden, 1.0, x, false, v.w1, true, 0.0, &mut z1);
    add_row_bias(&mut z1, v.b1);
    let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let mut y = vec![0.0; batch * cfg.output];
    gemm(batch, cfg.hidden, cfg.output, 1.0, &a1, false, v.w2, true, 0.0, &mut y);
    add_row_bias(&mut y, v.b2);
    (z1, a1, y)
}

pub(crate) fn forward(cfg: &OlffConfig, w: &[f64], x: &[f64], batch: usize) -> Vec<f64> {
    forward_internal(cfg, w, x, batch).2
}

/// Mean-squared error over batch and outputs; writes its gradient into `grad`.
pub(crate) fn loss_and_grad(
    cfg: &OlffConfig,
    w: &[f64],
    x: &[f64],
    targets: &[f64],
    batch: usize,
    grad: &mut [f64],
) -> f64 {
    let (z1, a1, y) = forward_internal(cfg, w, x, batch);
    let scale = 1.0 / (batch * cfg.output) as f64;
    let mut loss = 0.0;
    let dy: Vec<f64> = y
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            2.0 * e * scale
        })
        .collect();
    loss *= scale;

    let v = split(cfg, w);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (g_w1, rest) = grad.split_at_mut(cfg.hidden * cfg.input_dim);
    let (g_b1, rest) = rest.split_at_mut(cfg.hidden);
    let (g_w2, g_b2) = rest.split_at_mut(cfg.output * cfg.hidden);

    // output layer
    gemm(cfg.output, batch, cfg.hidden, 1.0, &dy, true, &a1, false, 0.0, g_w2);
    add_column_sums(g_b2, &dy);

    // back through the rectifier
    let mut dz1 = vec![0.0; batch * cfg.hidden];
    gemm(batch, cfg.output, cfg.hidden, 1.0, &dy, false, v.w2, false, 0.0, &mut dz1);
    for (d, z) in dz1.iter_mut().zip(&z1) {
        if *z <= 0.0 {
            *d = 0.0;
        }
    }
    gemm(cfg.hidden, batch, cfg.input_dim, 1.0, &dz1, true, x, false, 0.0, g_w1);
    add_column_sums(g_b1, &dz1);
    loss
}
