//! Spectral graph convolution regressor.
//!
//! The input channels are projected onto the retained graph Fourier basis
//! once (the projection has no trainable weights). Each filter `f` scales the
//! coefficients of channel `c` by a Chebyshev series `g_fc(lambda~)` that
//! vanishes at the largest retained frequency, the filtered channels are
//! summed and the resulting `filters x mu` spectral feature map feeds
//! `relu(fc) -> output`. There is no inverse transform back to the vertices.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{add_column_sums, add_row_bias, gemm};
use super::weights::{Segment, WeightStore};
use crate::error::{PrevisError, Result};

pub const DEFAULT_MU: usize = 100;
pub const DEFAULT_FILTERS: usize = 25;
pub const DEFAULT_CHEB_ORDER: usize = 15;
pub const DEFAULT_FC: usize = 2048;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub mu: usize,
    pub channels: usize,
    pub filters: usize,
    pub cheb_order: usize,
    pub fc: usize,
    pub output: usize,
}

pub fn gcn_conv_weight_count(filters: usize, channels: usize, cheb_order: usize) -> usize {
    filters * channels * cheb_order
}

impl GcnConfig {
    pub fn flatten_width(&self) -> usize {
        self.mu * self.filters
    }

    pub fn conv_weight_count(&self) -> usize {
        gcn_conv_weight_count(self.filters, self.channels, self.cheb_order)
    }

    pub fn weight_count(&self) -> usize {
        self.conv_weight_count()
            + self.flatten_width() * self.fc
            + self.fc
            + self.fc * self.output
            + self.output
    }

    pub(crate) fn layout(&self) -> WeightStore {
        WeightStore::from_segments(vec![
            Segment::new("cheb.theta", vec![self.filters, self.channels, self.cheb_order]),
            Segment::new("fc.weight", vec![self.fc, self.flatten_width()]),
            Segment::new("fc.bias", vec![self.fc]),
            Segment::new("output.weight", vec![self.output, self.fc]),
            Segment::new("output.bias", vec![self.output]),
        ])
    }

    pub(crate) fn initialize(&self, store: &mut WeightStore, rng: &mut ChaCha8Rng) {
        let theta = 1.0 / ((self.channels * self.cheb_order) as f64).sqrt();
        for w in store.segment_mut("cheb.theta") {
            *w = rng.random_range(-theta..theta);
        }
        let he = (6.0 / self.flatten_width() as f64).sqrt();
        for w in store.segment_mut("fc.weight") {
            *w = rng.random_range(-he..he);
        }
        let glorot = (6.0 / (self.fc + self.output) as f64).sqrt();
        for w in store.segment_mut("output.weight") {
            *w = rng.random_range(-glorot..glorot);
        }
    }
}

/// Chebyshev polynomials of the first kind `T_0..T_{order-1}` at `x`.
fn chebyshev_values(x: f64, order: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(order);
    for k in 0..order {
        let v = match k {
            0 => 1.0,
            1 => x,
            _ => 2.0 * x * t[k - 1] - t[k - 2],
        };
        t.push(v);
    }
    t
}

/// `g(x) = sum_k theta_k (T_k(x) - T_k(1))`, which is zero at `x = 1`.
pub fn cheb_response(theta: &[f64], lambda_tilde: f64) -> Result<f64> {
    if !(lambda_tilde.abs() <= 1.0 + 1e-12) {
        return Err(PrevisError::invalid(format!(
            "rescaled eigenvalue {lambda_tilde} outside [-1, 1]"
        )));
    }
    let tx = chebyshev_values(lambda_tilde, theta.len());
    let t1 = chebyshev_values(1.0, theta.len());
    Ok(theta
        .iter()
        .zip(tx.iter().zip(&t1))
        .map(|(th, (a, b))| th * (a - b))
        .sum())
}

/// `table[k * mu + i] = T_k(lambda~_i) - T_k(1)`.
pub(crate) fn shifted_chebyshev_table(rescaled: &[f64], order: usize) -> Vec<f64> {
    let mu = rescaled.len();
    let t1 = chebyshev_values(1.0, order);
    let mut table = vec![0.0; order * mu];
    for (i, &x) in rescaled.iter().enumerate() {
        for (k, tk) in chebyshev_values(x, order).into_iter().enumerate() {
            table[k * mu + i] = tk - t1[k];
        }
    }
    table
}

struct Views<'a> {
    theta: &'a [f64],
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

fn split<'a>(cfg: &GcnConfig, w: &'a [f64]) -> Views<'a> {
    let (theta, rest) = w.split_at(cfg.conv_weight_count());
    let (w1, rest) = rest.split_at(cfg.fc * cfg.flatten_width());
    let (b1, rest) = rest.split_at(cfg.fc);
    let (w2, b2) = rest.split_at(cfg.output * cfg.fc);
    Views { theta, w1, b1, w2, b2 }
}

/// Filter responses `g[(f * C + c) * mu + i]` at every retained frequency.
fn filter_responses(cfg: &GcnConfig, theta: &[f64], table: &[f64]) -> Vec<f64> {
    let mu = cfg.mu;
    let k_order = cfg.cheb_order;
    let mut g = vec![0.0; cfg.filters * cfg.channels * mu];
    gemm(cfg.filters * cfg.channels, k_order, mu, 1.0, theta, false, table, false, 0.0, &mut g);
    g
}

/// Spectral feature map `batch x (filters * mu)` from coefficients
/// `batch x (channels * mu)`.
pub(crate) fn feature_map(cfg: &GcnConfig, theta: &[f64], table: &[f64], coeffs: &[f64], batch: usize) -> Vec<f64> {
    let g = filter_responses(cfg, theta, table);
    features_from_responses(cfg, &g, coeffs, batch)
}

fn features_from_responses(cfg: &GcnConfig, g: &[f64], coeffs: &[f64], batch: usize) -> Vec<f64> {
    let mu = cfg.mu;
    let in_w = cfg.channels * mu;
    let out_w = cfg.flatten_width();
    let mut h = vec![0.0; batch * out_w];
    for b in 0..batch {
        let s = &coeffs[b * in_w..(b + 1) * in_w];
        let row = &mut h[b * out_w..(b + 1) * out_w];
        for f in 0..cfg.filters {
            let out = &mut row[f * mu..(f + 1) * mu];
            for c in 0..cfg.channels {
                let gfc = &g[(f * cfg.channels + c) * mu..(f * cfg.channels + c + 1) * mu];
                let sc = &s[c * mu..(c + 1) * mu];
                for i in 0..mu {
                    out[i] += gfc[i] * sc[i];
                }
            }
        }
    }
    h
}

struct Forward {
    g: Vec<f64>,
    h0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    y: Vec<f64>,
}

fn forward_internal(cfg: &GcnConfig, w: &[f64], table: &[f64], coeffs: &[f64], batch: usize) -> Forward {
    let v = split(cfg, w);
    let g = filter_responses(cfg, v.theta, table);
    let h0 = features_from_responses(cfg, &g, coeffs, batch);
    let width = cfg.flatten_width();
    let mut z1 = vec![0.0; batch * cfg.fc];
    gemm(batch, width, cfg.fc, 1.0, &h0, false, v.w1, true, 0.0, &mut z1);
    add_row_bias(&mut z1, v.b1);
    let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let mut y = vec![0.0; batch * cfg.output];
    gemm(batch, cfg.fc, cfg.output, 1.0, &a1, false, v.w2, true, 0.0, &mut y);
    add_row_bias(&mut y, v.b2);
    Forward { g, h0, z1, a1, y }
}

pub(crate) fn forward(cfg: &GcnConfig, w: &[f64], table: &[f64], coeffs: &[f64], batch: usize) -> Vec<f64> {
    forward_internal(cfg, w, table, coeffs, batch).y
}

pub(crate) fn loss_and_grad(
    cfg: &GcnConfig,
    w: &[f64],
    table: &[f64],
    coeffs: &[f64],
    targets: &[f64],
    batch: usize,
    grad: &mut [f64],
) -> f64 {
    let fw = forward_internal(cfg, w, table, coeffs, batch);
    let scale = 1.0 / (batch * cfg.output) as f64;
    let mut loss = 0.0;
    let dy: Vec<f64> = fw
        .y
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
    let mu = cfg.mu;
    let width = cfg.flatten_width();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (g_theta, rest) = grad.split_at_mut(cfg.conv_weight_count());
    let (g_w1, rest) = rest.split_at_mut(cfg.fc * width);
    let (g_b1, rest) = rest.split_at_mut(cfg.fc);
    let (g_w2, g_b2) = rest.split_at_mut(cfg.output * cfg.fc);

    gemm(cfg.output, batch, cfg.fc, 1.0, &dy, true, &fw.a1, false, 0.0, g_w2);
    add_column_sums(g_b2, &dy);

    let mut dz1 = vec![0.0; batch * cfg.fc];
    gemm(batch, cfg.output, cfg.fc, 1.0, &dy, false, v.w2, false, 0.0, &mut dz1);
    for (d, z) in dz1.iter_mut().zip(&fw.z1) {
        if *z <= 0.0 {
            *d = 0.0;
        }
    }
    gemm(cfg.fc, batch, width, 1.0, &dz1, true, &fw.h0, false, 0.0, g_w1);
    add_column_sums(g_b1, &dz1);

    let mut dh0 = vec![0.0; batch * width];
    gemm(batch, cfg.fc, width, 1.0, &dz1, false, v.w1, false, 0.0, &mut dh0);

    // dG[f, c, i] = sum_b dH0[b, f, i] * S[b, c, i]
    let in_w = cfg.channels * mu;
    let mut dg = vec![0.0; fw.g.len()];
    for b in 0..batch {
        let s = &coeffs[b * in_w..(b + 1) * in_w];
        let dh = &dh0[b * width..(b + 1) * width];
        for f in 0..cfg.filters {
            let dhf = &dh[f * mu..(f + 1) * mu];
            for c in 0..cfg.channels {
                let sc = &s[c * mu..(c + 1) * mu];
                let dgfc = &mut dg[(f * cfg.channels + c) * mu..(f * cfg.channels + c + 1) * mu];
                for i in 0..mu {
                    dgfc[i] += dhf[i] * sc[i];
                }
            }
        }
    }
    // dtheta = dG * table^T
    gemm(cfg.filters * cfg.channels, mu, cfg.cheb_order, 1.0, &dg, false, table, true, 0.0, g_theta);
    loss
}
