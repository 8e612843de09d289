//! Minibatch SGD with a step learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::net::{loss_and_gradients, sgd_step, Batch, Mode};
use crate::state::{InitScheme, NetworkState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// The rate is multiplied by this factor every `decay_interval`
    /// iterations.
    pub decay_factor: f64,
    pub decay_interval: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives shuffling and dropout masks.
    pub seed: u64,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            decay_factor: 0.9,
            decay_interval: 100_000,
            batch_size: 100,
            epochs: 30,
            seed: 0,
            init: InitScheme::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay factor {} must lie in (0, 1]",
                self.decay_factor
            )));
        }
        if self.decay_interval == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "decay interval and batch size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn rate_at(&self, iteration: usize) -> f64 {
        self.learning_rate
            * self
                .decay_factor
                .powi((iteration / self.decay_interval) as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over the epoch's minibatches of the total loss `Σ_i C_i`.
    pub mean_loss: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

/// Trains `state` in place and returns one entry per epoch.
pub fn train(
    state: &mut NetworkState,
    arch: &ArchitectureSpec,
    data: &Batch,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut iteration = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk)?;
            let mode = Mode::Train {
                seed: cfg.seed ^ (iteration as u64).wrapping_mul(0xa076_1d64_78bd_642f),
            };
            let (l, g) = loss_and_gradients(state, arch, &batch, mode, None)?;
            sgd_step(state, &g, cfg.rate_at(iteration))?;
            sum += l.total;
            batches += 1;
            iteration += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: sum / batches as f64,
            learning_rate: cfg.rate_at(iteration.saturating_sub(1)),
            iterations: iteration,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_down() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            decay_interval: 10,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.rate_at(9), 1.0);
        assert!((cfg.rate_at(10) - 0.9).abs() < 1e-15);
        assert!((cfg.rate_at(25) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rate() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
