use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Gradients, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One bias-corrected Adam update. Nothing is modified when any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        let info = params.trainable_info();
        if grads.tensors.len() != info.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} parameters",
                grads.tensors.len(),
                info.len()
            )));
        }
        for (g, i) in grads.tensors.iter().zip(&info) {
            if g.len() != i.dims.iter().product::<usize>() {
                return Err(Error::Shape(format!("gradient for `{}` has {} values", i.name, g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(i.name.clone()));
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.trainable_mut().into_iter().zip(&grads.tensors).zip(&mut self.m).zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Parameters, optimizer state and the dropout stream of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub dropout_rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(params: ModelParams, config: AdamConfig, dropout_seed: u64) -> Self {
        let adam = AdamState::new(&params, config);
        TrainState { params, adam, dropout_rng: ChaCha8Rng::seed_from_u64(dropout_seed) }
    }

    pub fn apply(&mut self, grads: &Gradients) -> Result<()> {
        self.adam.step(&mut self.params, grads)
    }
}
