//! Optimization loop state: one seeded mini-batch step at a time.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::corpus::Sample;
use super::loss::{LossBreakdown, LossWeights};
use crate::error::{Error, Result};
use crate::stegnet::{Hyper, StegModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    /// Window (in steps) over which the mean loss is compared for the
    /// plateau schedule.
    pub plateau_window: u64,
    /// Windows without improvement before the learning rate is halved.
    pub plateau_patience: u32,
    /// Straight-through 8-bit rounding of the encoded image.
    pub quantize: bool,
    /// Global L2 bound on the batch gradient; 0 disables clipping.
    pub clip_norm: f64,
    pub hyper: Hyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 1.6,
            lr: 1e-4,
            batch_size: 4,
            steps: 2000,
            seed: 0,
            plateau_window: 100,
            plateau_patience: 3,
            quantize: true,
            clip_norm: 0.0,
            hyper: Hyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Parameter("alpha and beta must be positive".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.batch_size == 0 || self.plateau_window == 0 {
            return Err(Error::Parameter("lr, batch_size and plateau_window must be positive".into()));
        }
        if !self.clip_norm.is_finite() || self.clip_norm < 0.0 {
            return Err(Error::Parameter("clip_norm must be finite and non-negative".into()));
        }
        self.hyper.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// 1-based index of the step just taken.
    pub step: u64,
    pub lr: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    /// Batch means.
    pub loss: LossBreakdown,
}

/// Learning-rate schedule state: halve on plateau.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub best: f64,
    pub bad_windows: u32,
    pub window_sum: f64,
    pub window_len: u64,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            best: f64::INFINITY,
            bad_windows: 0,
            window_sum: 0.0,
            window_len: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: StegModel<f32>,
    pub adam: Adam,
    /// Steps completed.
    pub step: u64,
    pub plateau: Plateau,
}

/// Batch indices for a step; a pure function of `(seed, step)` so resumed
/// runs draw the same batches.
pub fn batch_indices(seed: u64, step: u64, corpus: usize, batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(step + 1));
    (0..batch).map(|_| rng.gen_range(0..corpus)).collect()
}

/// Global L2 norm over every parameter gradient.
pub fn grad_norm(grad: &StegModel<f32>) -> f64 {
    let mut sum = 0.0f64;
    grad.visit(&mut |_, _, v| sum += v.iter().map(|&g| f64::from(g) * f64::from(g)).sum::<f64>());
    libm::sqrt(sum)
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = StegModel::init(config.hyper, config.seed)?;
        let adam = Adam::new(model.param_count(), config.lr);
        Ok(Self {
            config,
            model,
            adam,
            step: 0,
            plateau: Plateau::default(),
        })
    }

    /// Restores a trainer from saved state.
    pub fn resume(config: TrainConfig, model: StegModel<f32>, adam: Adam, step: u64, plateau: Plateau) -> Result<Self> {
        config.validate()?;
        if model.hyper != config.hyper {
            return Err(Error::Parameter("checkpoint architecture differs from the config".into()));
        }
        if adam.m.len() != model.param_count() {
            return Err(Error::ModelIntegrity("optimizer state does not match the model".into()));
        }
        Ok(Self {
            config,
            model,
            adam,
            step,
            plateau,
        })
    }

    /// Mean loss and gradient over a batch, without updating anything.
    pub fn batch_gradient(&self, batch: &[&Sample]) -> Result<(LossBreakdown, StegModel<f32>)> {
        let weights = self.config.weights();
        let mut grad = self.model.zeros_like();
        let mut sum = LossBreakdown::default();
        for s in batch {
            let out = self
                .model
                .train_pass(&s.carrier, &s.secrets, &weights, self.config.quantize, &mut grad)?;
            sum.mse += out.loss.mse;
            sum.freq += out.loss.freq;
            sum.restoration += out.loss.restoration;
            sum.total += out.loss.total;
        }
        let n = batch.len() as f64;
        let mean = LossBreakdown {
            mse: sum.mse / n,
            freq: sum.freq / n,
            restoration: sum.restoration / n,
            total: sum.total / n,
        };
        let scale = 1.0 / n as f32;
        grad.visit_mut(&mut |_, _, v| v.iter_mut().for_each(|g| *g *= scale));
        Ok((mean, grad))
    }

    /// One optimizer step on a batch drawn from `corpus`.
    pub fn train_step(&mut self, corpus: &[Sample]) -> Result<StepReport> {
        if corpus.is_empty() {
            return Err(Error::Parameter("training corpus is empty".into()));
        }
        let idx = batch_indices(self.config.seed, self.step, corpus.len(), self.config.batch_size);
        let batch: Vec<&Sample> = idx.iter().map(|&i| &corpus[i]).collect();
        let (loss, mut grad) = self.batch_gradient(&batch)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged(self.step + 1));
        }
        let norm = grad_norm(&grad);
        if !norm.is_finite() {
            return Err(Error::Diverged(self.step + 1));
        }
        if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            let scale = (self.config.clip_norm / norm) as f32;
            grad.visit_mut(&mut |_, _, v| v.iter_mut().for_each(|g| *g *= scale));
        }
        self.adam.step_model(&mut self.model, &grad)?;
        self.step += 1;
        self.update_schedule(loss.total);
        Ok(StepReport {
            step: self.step,
            lr: self.adam.lr,
            grad_norm: norm,
            loss,
        })
    }

    fn update_schedule(&mut self, loss: f64) {
        let p = &mut self.plateau;
        p.window_sum += loss;
        p.window_len += 1;
        if p.window_len < self.config.plateau_window {
            return;
        }
        let mean = p.window_sum / p.window_len as f64;
        p.window_sum = 0.0;
        p.window_len = 0;
        if mean < p.best * (1.0 - 1e-3) {
            p.best = mean;
            p.bad_windows = 0;
        } else {
            p.bad_windows += 1;
            if p.bad_windows >= self.config.plateau_patience {
                self.adam.lr *= 0.5;
                p.bad_windows = 0;
            }
        }
    }

    pub fn describe(&self) -> alloc::string::String {
        format!(
            "step {} of {}, lr {:e}, {} parameters",
            self.step,
            self.config.steps,
            self.adam.lr,
            self.model.param_count()
        )
    }
}
