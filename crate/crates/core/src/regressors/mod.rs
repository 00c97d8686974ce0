//! Field-to-parameter regressors: a one-hidden-layer feed-forward network
//! (OLFF) and a spectral graph convolution network (GCN), with hand-written
//! backpropagation, their optimizers and a finite-difference gradient check.
//!
//! Both models consume the full 3-component displacement field, z-scored per
//! vertex channel with statistics fitted on the training set.

mod dense;
pub mod gcn;
pub mod olff;
pub mod optim;
mod weights;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ParameterVector, Sample, VectorField};
use crate::error::{PrevisError, Result};
use crate::geometry::SpectralOperator;

pub use gcn::{cheb_response, gcn_conv_weight_count, GcnConfig};
pub use olff::{olff_weight_count, OlffConfig};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use weights::{Segment, WeightStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    Olff,
    Gcn,
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Olff => "olff",
            Self::Gcn => "gcn",
        })
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = PrevisError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "olff" => Ok(Self::Olff),
            "gcn" => Ok(Self::Gcn),
            other => Err(PrevisError::invalid(format!("unknown regressor kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Olff(OlffConfig),
    Gcn(GcnConfig),
}

impl Architecture {
    pub fn kind(&self) -> RegressorKind {
        match self {
            Self::Olff(_) => RegressorKind::Olff,
            Self::Gcn(_) => RegressorKind::Gcn,
        }
    }

    pub fn weight_count(&self) -> usize {
        match self {
            Self::Olff(c) => c.weight_count(),
            Self::Gcn(c) => c.weight_count(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Olff(c) => c.output,
            Self::Gcn(c) => c.output,
        }
    }
}

/// Per-input z-scoring (`(x - mean) / scale`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Inputs with standard deviation at or below `1e-12` keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(PrevisError::Empty("standardizer input"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            PrevisError::check_len("standardizer row", dim, r.len())?;
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// Field-to-parameter predictor.
pub trait Predictor: Sync {
    fn predict(&self, field: &VectorField) -> Result<ParameterVector>;

    fn predict_batch(&self, fields: &[&VectorField]) -> Result<Vec<ParameterVector>> {
        fields.par_iter().map(|f| self.predict(f)).collect()
    }
}

/// A trained or freshly initialized regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub arch: Architecture,
    pub weights: WeightStore,
    pub seed: u64,
    pub standardizer: Option<Standardizer>,
    /// Second z-scoring of the graph Fourier coefficients (GCN only).
    pub spectral_standardizer: Option<Standardizer>,
    /// Retained graph Fourier basis (GCN only).
    pub spectral: Option<Arc<SpectralOperator>>,
    pub mesh_id: Option<String>,
    pub optimizer: Option<OptimizerConfig>,
    pub optimizer_state: Option<OptimizerState>,
    /// Mean training loss per epoch.
    pub training_log: Vec<f64>,
    cheb_table: Vec<f64>,
}

/// Fully connected `input -> relu(hidden) -> output` network.
pub fn init_olff(input_dim: usize, hidden: usize, output: usize, seed: u64) -> Result<Regressor> {
    if input_dim == 0 || hidden == 0 || output == 0 {
        return Err(PrevisError::invalid("OLFF dimensions must be >= 1"));
    }
    let cfg = OlffConfig { input_dim, hidden, output };
    let mut weights = cfg.layout();
    cfg.initialize(&mut weights, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Regressor::assemble(Architecture::Olff(cfg), weights, seed, None))
}

/// Spectral GCN over the retained basis of `spectral`, three input channels.
pub fn init_gcn(
    spectral: Arc<SpectralOperator>,
    filters: usize,
    cheb_order: usize,
    fc: usize,
    output: usize,
    seed: u64,
) -> Result<Regressor> {
    if spectral.mu == 0 {
        return Err(PrevisError::Empty("spectral basis"));
    }
    if filters == 0 || cheb_order == 0 || fc == 0 || output == 0 {
        return Err(PrevisError::invalid("GCN dimensions must be >= 1"));
    }
    let cfg = GcnConfig {
        mu: spectral.mu,
        channels: gcn::INPUT_CHANNELS,
        filters,
        cheb_order,
        fc,
        output,
    };
    let mut weights = cfg.layout();
    cfg.initialize(&mut weights, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Regressor::assemble(Architecture::Gcn(cfg), weights, seed, Some(spectral)))
}

impl Regressor {
    fn assemble(arch: Architecture, weights: WeightStore, seed: u64, spectral: Option<Arc<SpectralOperator>>) -> Self {
        let cheb_table = match (&arch, &spectral) {
            (Architecture::Gcn(cfg), Some(op)) => gcn::shifted_chebyshev_table(&op.rescaled_eigenvalues, cfg.cheb_order),
            _ => Vec::new(),
        };
        Self {
            arch,
            weights,
            seed,
            standardizer: None,
            spectral_standardizer: None,
            spectral,
            mesh_id: None,
            optimizer: None,
            optimizer_state: None,
            training_log: Vec::new(),
            cheb_table,
        }
    }

    /// Rebuilds a regressor from persisted parts, validating the layout.
    pub fn from_parts(
        arch: Architecture,
        weights: WeightStore,
        seed: u64,
        spectral: Option<Arc<SpectralOperator>>,
    ) -> Result<Self> {
        if !weights.is_consistent() || weights.len() != arch.weight_count() {
            return Err(PrevisError::Corrupt(format!(
                "weight layout does not match architecture ({} stored, {} expected)",
                weights.len(),
                arch.weight_count()
            )));
        }
        match (&arch, &spectral) {
            (Architecture::Gcn(cfg), Some(op)) if op.mu == cfg.mu => {}
            (Architecture::Gcn(_), _) => {
                return Err(PrevisError::Corrupt("GCN requires a matching spectral basis".into()))
            }
            (Architecture::Olff(_), _) => {}
        }
        Ok(Self::assemble(arch, weights, seed, spectral))
    }

    pub fn kind(&self) -> RegressorKind {
        self.arch.kind()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn input_vertex_count(&self) -> usize {
        match &self.arch {
            Architecture::Olff(c) => c.input_dim / 3,
            Architecture::Gcn(_) => self.spectral.as_ref().map_or(0, |s| s.vertex_count()),
        }
    }

    /// Standardized (and for the GCN, spectrally projected) network input.
    pub fn prepare_input(&self, field: &VectorField) -> Result<Vec<f64>> {
        if let Some(id) = &self.mesh_id {
            if *id != field.mesh_id {
                return Err(PrevisError::MeshMismatch {
                    expected: id.clone(),
                    found: field.mesh_id.clone(),
                });
            }
        }
        let mut x = field.flatten();
        match &self.arch {
            Architecture::Olff(cfg) => PrevisError::check_len("OLFF input", cfg.input_dim, x.len())?,
            Architecture::Gcn(_) => {
                PrevisError::check_len("GCN input vertices", self.input_vertex_count(), field.len())?
            }
        }
        if let Some(s) = &self.standardizer {
            s.apply(&mut x);
        }
        match &self.arch {
            Architecture::Olff(_) => Ok(x),
            Architecture::Gcn(cfg) => {
                let op = self.spectral.as_ref().expect("GCN carries its spectral basis");
                let mut coeffs = Vec::with_capacity(cfg.channels * cfg.mu);
                for c in 0..cfg.channels {
                    let channel: Vec<f64> = x.iter().skip(c).step_by(3).copied().collect();
                    coeffs.extend(op.project(&channel));
                }
                if let Some(s) = &self.spectral_standardizer {
                    s.apply(&mut coeffs);
                }
                Ok(coeffs)
            }
        }
    }

    fn forward_prepared(&self, weights: &[f64], x: &[f64], batch: usize) -> Vec<f64> {
        match &self.arch {
            Architecture::Olff(cfg) => olff::forward(cfg, weights, x, batch),
            Architecture::Gcn(cfg) => gcn::forward(cfg, weights, &self.cheb_table, x, batch),
        }
    }

    fn loss_and_grad(&self, weights: &[f64], x: &[f64], y: &[f64], batch: usize, grad: &mut [f64]) -> f64 {
        match &self.arch {
            Architecture::Olff(cfg) => olff::loss_and_grad(cfg, weights, x, y, batch, grad),
            Architecture::Gcn(cfg) => gcn::loss_and_grad(cfg, weights, &self.cheb_table, x, y, batch, grad),
        }
    }

    /// Mean-squared error of the current weights on prepared inputs.
    pub fn loss_on_samples(&self, samples: &[Sample]) -> Result<f64> {
        let (x, y) = self.prepare_batch(samples)?;
        let out = self.forward_prepared(&self.weights.data, &x, samples.len());
        Ok(out.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
    }

    fn prepare_batch(&self, samples: &[Sample]) -> Result<(Vec<f64>, Vec<f64>)> {
        let rows: Vec<Vec<f64>> = samples
            .par_iter()
            .map(|s| self.prepare_input(&s.field))
            .collect::<Result<_>>()?;
        let mut y = Vec::with_capacity(samples.len() * self.output_dim());
        for s in samples {
            PrevisError::check_len("target parameters", self.output_dim(), s.params.len())?;
            y.extend_from_slice(&s.params.0);
        }
        Ok((rows.concat(), y))
    }

    /// Spectral feature map (`filters x mu`, filter-major) of a field.
    pub fn gcn_feature_map(&self, field: &VectorField) -> Result<Vec<f64>> {
        let Architecture::Gcn(cfg) = &self.arch else {
            return Err(PrevisError::invalid("feature map is only defined for the GCN"));
        };
        let coeffs = self.prepare_input(field)?;
        Ok(gcn::feature_map(cfg, self.weights.segment("cheb.theta"), &self.cheb_table, &coeffs, 1))
    }
}

impl Predictor for Regressor {
    fn predict(&self, field: &VectorField) -> Result<ParameterVector> {
        let x = self.prepare_input(field)?;
        Ok(ParameterVector(self.forward_prepared(&self.weights.data, &x, 1)))
    }
}

pub fn predict(model: &Regressor, field: &VectorField) -> Result<ParameterVector> {
    model.predict(field)
}

/// One finished epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochProgress {
    pub epoch: usize,
    pub epochs: usize,
    pub loss: f64,
}

pub fn train(model: Regressor, train_set: &[Sample], opt: &OptimizerConfig) -> Result<Regressor> {
    train_with_progress(model, train_set, opt, |_| {})
}

/// Mini-batch training on mean-squared parameter error.
///
/// Standardization statistics are refitted on `train_set`. The loop is
/// deterministic for a fixed `opt.shuffle_seed`. A non-finite epoch loss or
/// weight aborts with [`PrevisError::Divergence`] (1-based epoch).
pub fn train_with_progress(
    mut model: Regressor,
    train_set: &[Sample],
    opt: &OptimizerConfig,
    mut progress: impl FnMut(&EpochProgress),
) -> Result<Regressor> {
    opt.validate()?;
    if train_set.is_empty() {
        return Err(PrevisError::Empty("training set"));
    }
    let mesh_id = train_set[0].field.mesh_id.clone();
    if let Some(s) = train_set.iter().find(|s| s.field.mesh_id != mesh_id) {
        return Err(PrevisError::MeshMismatch {
            expected: mesh_id,
            found: s.field.mesh_id.clone(),
        });
    }
    model.mesh_id = Some(mesh_id);
    let raw: Vec<Vec<f64>> = train_set.iter().map(|s| s.field.flatten()).collect();
    model.standardizer = Some(Standardizer::fit(&raw)?);
    drop(raw);
    if let Architecture::Gcn(_) = model.arch {
        model.spectral_standardizer = None;
        let coeffs: Vec<Vec<f64>> = train_set
            .par_iter()
            .map(|s| model.prepare_input(&s.field))
            .collect::<Result<_>>()?;
        model.spectral_standardizer = Some(Standardizer::fit(&coeffs)?);
    }

    let (x, y) = model.prepare_batch(train_set)?;
    let n = train_set.len();
    let in_w = x.len() / n;
    let out_w = model.output_dim();

    let n_weights = model.weights.len();
    let mut state = match model.optimizer_state.take() {
        Some(s) if model.optimizer.map(|o| std::mem::discriminant(&o.kind)) == Some(std::mem::discriminant(&opt.kind)) => s,
        _ => OptimizerState::new(&opt.kind, n_weights),
    };
    let mut weights = std::mem::take(&mut model.weights.data);
    let mut grad = vec![0.0; n_weights];
    let mut scratch = Vec::with_capacity(n_weights);
    let mut xb = Vec::with_capacity(opt.batch_size * in_w);
    let mut yb = Vec::with_capacity(opt.batch_size * out_w);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opt.shuffle_seed);

    for epoch in 1..=opt.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opt.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(&x[i * in_w..(i + 1) * in_w]);
                yb.extend_from_slice(&y[i * out_w..(i + 1) * out_w]);
            }
            let b = chunk.len();
            let m = &model;
            let loss = state.step(&opt.kind, &mut weights, &mut scratch, &mut grad, |w, g| {
                m.loss_and_grad(w, &xb, &yb, b, g)
            });
            epoch_loss += loss * b as f64;
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(PrevisError::Divergence { epoch, loss: epoch_loss });
        }
        model.training_log.push(epoch_loss);
        progress(&EpochProgress {
            epoch,
            epochs: opt.epochs,
            loss: epoch_loss,
        });
    }

    model.weights.data = weights;
    model.optimizer = Some(*opt);
    model.optimizer_state = Some(state);
    Ok(model)
}

/// Largest relative deviation between analytic and central-difference
/// gradients over a random subset of weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Denominator floor of the relative error, below which gradients are compared absolutely.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-8;

/// Compares backpropagated gradients of the single-sample loss with central
/// differences of step `h` on `count` distinct random weights.
pub fn gradient_check(model: &Regressor, sample: &Sample, h: f64, count: usize, seed: u64) -> Result<GradientCheckReport> {
    let n = model.weights.len();
    let count = count.min(n);
    let picks: Vec<usize> = if count == n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, count).into_vec()
    };
    gradient_check_at(model, sample, h, &picks)
}

/// [`gradient_check`] on the given weight indices.
pub fn gradient_check_at(model: &Regressor, sample: &Sample, h: f64, indices: &[usize]) -> Result<GradientCheckReport> {
    if !(h > 0.0) {
        return Err(PrevisError::invalid("finite-difference step must be positive"));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= model.weights.len()) {
        return Err(PrevisError::invalid(format!(
            "weight index {i} out of range for {} weights",
            model.weights.len()
        )));
    }
    let (x, y) = model.prepare_batch(std::slice::from_ref(sample))?;
    let mut weights = model.weights.data.clone();
    let mut analytic = vec![0.0; weights.len()];
    model.loss_and_grad(&weights, &x, &y, 1, &mut analytic);

    let mut scratch = vec![0.0; weights.len()];
    let mut loss_at = |w: &[f64]| model.loss_and_grad(w, &x, &y, 1, &mut scratch);
    let mut report = GradientCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: indices.len(),
    };
    for &i in indices {
        let orig = weights[i];
        weights[i] = orig + h;
        let plus = loss_at(&weights);
        weights[i] = orig - h;
        let minus = loss_at(&weights);
        weights[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        let rel = (a - numeric).abs() / denom;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}
