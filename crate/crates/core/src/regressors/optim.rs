use serde::{Deserialize, Serialize};

use crate::error::{PrevisError, Result};

pub const OLFF_EPOCHS: usize = 2000;
pub const GCN_EPOCHS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdNesterov { lr: f64, momentum: f64 },
    Adagrad { lr: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl OptimizerConfig {
    /// SGD with Nesterov momentum, 2000 epochs.
    pub fn olff_default() -> Self {
        Self {
            kind: OptimizerKind::SgdNesterov { lr: 1e-3, momentum: 0.9 },
            epochs: OLFF_EPOCHS,
            batch_size: 32,
            shuffle_seed: 0,
        }
    }

    /// AdaGrad, 300 epochs.
    pub fn gcn_default() -> Self {
        Self {
            kind: OptimizerKind::Adagrad { lr: 1e-2, eps: 1e-8 },
            epochs: GCN_EPOCHS,
            batch_size: 32,
            shuffle_seed: 0,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        match &mut self.kind {
            OptimizerKind::SgdNesterov { lr: l, .. } | OptimizerKind::Adagrad { lr: l, .. } => *l = lr,
        }
        self
    }

    pub fn lr(&self) -> f64 {
        match self.kind {
            OptimizerKind::SgdNesterov { lr, .. } | OptimizerKind::Adagrad { lr, .. } => lr,
        }
    }

    /// A zero learning rate is accepted (frozen weights); negative is not.
    pub fn validate(&self) -> Result<()> {
        let lr = self.lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(PrevisError::invalid(format!("learning rate must be >= 0, got {lr}")));
        }
        match self.kind {
            OptimizerKind::SgdNesterov { momentum, .. } if !(0.0..1.0).contains(&momentum) => {
                return Err(PrevisError::invalid(format!("momentum must lie in [0, 1), got {momentum}")));
            }
            OptimizerKind::Adagrad { eps, .. } if !(eps > 0.0 && eps.is_finite()) => {
                return Err(PrevisError::invalid(format!("adagrad eps must be > 0, got {eps}")));
            }
            _ => {}
        }
        if self.epochs < 1 {
            return Err(PrevisError::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(PrevisError::invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

/// Per-weight optimizer memory.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Nesterov { velocity: Vec<f64> },
    Adagrad { accumulator: Vec<f64> },
}

impl OptimizerState {
    pub fn new(kind: &OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::SgdNesterov { .. } => Self::Nesterov { velocity: vec![0.0; n] },
            OptimizerKind::Adagrad { .. } => Self::Adagrad { accumulator: vec![0.0; n] },
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Self::Nesterov { velocity } => velocity,
            Self::Adagrad { accumulator } => accumulator,
        }
    }

    /// One optimizer step. `grad_at` evaluates the mini-batch gradient at the
    /// weights it is handed, writing into its output buffer, and returns the loss.
    pub(crate) fn step(
        &mut self,
        kind: &OptimizerKind,
        weights: &mut [f64],
        scratch: &mut Vec<f64>,
        grad: &mut [f64],
        mut grad_at: impl FnMut(&[f64], &mut [f64]) -> f64,
    ) -> f64 {
        match (self, *kind) {
            (Self::Nesterov { velocity }, OptimizerKind::SgdNesterov { lr, momentum }) => {
                // gradient at the lookahead point w + momentum * v
                scratch.clear();
                scratch.extend(weights.iter().zip(velocity.iter()).map(|(w, v)| w + momentum * v));
                let loss = grad_at(scratch, grad);
                for ((w, v), g) in weights.iter_mut().zip(velocity.iter_mut()).zip(grad.iter()) {
                    *v = momentum * *v - lr * g;
                    *w += *v;
                }
                loss
            }
            (Self::Adagrad { accumulator }, OptimizerKind::Adagrad { lr, eps }) => {
                let loss = grad_at(weights, grad);
                for ((w, acc), g) in weights.iter_mut().zip(accumulator.iter_mut()).zip(grad.iter()) {
                    *acc += g * g;
                    *w -= lr * g / (acc.sqrt() + eps);
                }
                loss
            }
            _ => unreachable!("optimizer state does not match optimizer kind"),
        }
    }
}
