use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce-on-plateau settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauConfig {
    /// Non-improving epochs tolerated before the rate is cut.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// An epoch improves only if it beats the best loss by more than this.
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            patience: 5,
            factor: 0.2,
            min_lr: 1e-7,
            min_delta: 0.0,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "plateau factor {} outside (0, 1)",
                self.factor
            )));
        }
        if !(self.min_lr >= 0.0) || !(self.min_delta >= 0.0) {
            return Err(Error::InvalidArgument(
                "min_lr and min_delta must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    config: PlateauConfig,
    best_loss: f64,
    wait: usize,
    current_lr: f64,
}

impl PlateauState {
    pub fn new(initial_lr: f64, config: PlateauConfig) -> Result<Self> {
        config.validate()?;
        if !(initial_lr >= config.min_lr) || !initial_lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initial learning rate {initial_lr} is below the floor {}",
                config.min_lr
            )));
        }
        Ok(Self {
            config,
            best_loss: f64::INFINITY,
            wait: 0,
            current_lr: initial_lr,
        })
    }

    pub fn current_lr(&self) -> f64 {
        self.current_lr
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn wait(&self) -> usize {
        self.wait
    }

    pub fn config(&self) -> &PlateauConfig {
        &self.config
    }

    /// Feeds one epoch's validation loss. Returns true when the learning
    /// rate was cut, which happens once `wait` exceeds `patience`.
    pub fn update(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best_loss - self.config.min_delta {
            self.best_loss = val_loss;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait > self.config.patience {
            self.current_lr = (self.current_lr * self.config.factor).max(self.config.min_lr);
            self.wait = 0;
            return true;
        }
        false
    }
}
