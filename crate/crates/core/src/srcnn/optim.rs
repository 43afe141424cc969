use serde::{Deserialize, Serialize};

use super::{srcnn_backward, Architecture, SrcnnModel};
use crate::conv::PaddingMode;
use crate::dataops::TrainBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    /// `v ← μ v + g;  θ ← θ − lr v`
    Sgd {
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: default_beta1(), beta2: default_beta2(), epsilon: default_adam_eps() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub seed: u64,
    pub scale_factor: usize,
    pub architecture: Architecture,
    /// Border policy used while training.
    pub padding: PaddingMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            optimizer: OptimizerKind::default(),
            iterations: 2000,
            batch_size: 16,
            patch_size: 33,
            patch_stride: 14,
            seed: 0,
            scale_factor: 2,
            architecture: Architecture::default(),
            padding: PaddingMode::Replicate,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if self.patch_size < 16 {
            return Err(Error::Parameter(format!("patch_size must be at least 16, got {}", self.patch_size)));
        }
        if self.patch_stride == 0 {
            return Err(Error::Parameter("patch_stride must be positive".into()));
        }
        if self.scale_factor == 0 {
            return Err(Error::Parameter("scale_factor must be at least 1".into()));
        }
        match self.optimizer {
            OptimizerKind::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                return Err(Error::Parameter(format!("momentum must be in [0, 1), got {momentum}")));
            }
            OptimizerKind::Adam { beta1, beta2, epsilon }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) =>
            {
                return Err(Error::Parameter("adam betas must be in [0, 1) and epsilon > 0".into()));
            }
            _ => {}
        }
        self.architecture.validate()
    }
}

/// Per-parameter optimizer moments, kept in `f64`.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn ensure_shape(&mut self, sizes: &[usize]) {
        if self.first.len() != sizes.len() || self.first.iter().zip(sizes).any(|(v, &n)| v.len() != n) {
            self.first = sizes.iter().map(|&n| vec![0.0; n]).collect();
            self.second = sizes.iter().map(|&n| vec![0.0; n]).collect();
            self.step = 0;
        }
    }
}

/// One optimizer step on `batch`. Returns the loss before the update.
///
/// `iteration` only labels a divergence error.
pub fn train_step<T: Scalar>(
    model: &mut SrcnnModel<T>,
    batch: &TrainBatch<T>,
    config: &TrainConfig,
    state: &mut OptimizerState,
    iteration: usize,
) -> Result<f64> {
    let (loss, grads) = srcnn_backward(model, batch, config.padding)?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::Divergence { iteration, loss });
    }
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    state.ensure_shape(&sizes);
    state.step += 1;
    let lr = config.learning_rate;
    let step = state.step as i32;
    for (k, (params, grad)) in model.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        match config.optimizer {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), m) in params.iter_mut().zip(grad).zip(m.iter_mut()) {
                    *m = momentum * *m + g.to_f64_lossy();
                    *p = T::from_f64_lossy(p.to_f64_lossy() - lr * *m);
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(step);
                let c2 = 1.0 - beta2.powi(step);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    let g = g.to_f64_lossy();
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + epsilon);
                    *p = T::from_f64_lossy(p.to_f64_lossy() - lr * update);
                }
            }
        }
    }
    Ok(loss)
}
