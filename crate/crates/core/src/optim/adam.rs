use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument(format!(
                "Adam decay rates ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "Adam epsilon and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments:
///
/// ```text
/// m ← β₁m + (1-β₁)g        m̂ = m / (1-β₁ᵗ)
/// v ← β₂v + (1-β₂)g²       v̂ = v / (1-β₂ᵗ)
/// θ ← θ - α·m̂ / (√v̂ + ε)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments for parameter arrays of the given lengths.
    pub fn new(config: AdamConfig, lengths: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn for_network(config: AdamConfig, net: &NetworkState) -> Result<Self> {
        let lengths: Vec<usize> = net.trainable_slices().iter().map(|s| s.len()).collect();
        Self::new(config, &lengths)
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update. Nothing is modified if the shapes disagree or any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} arrays, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::InvalidArgument(format!(
                    "array {i}: parameter length {}, gradient length {}, moment length {}",
                    p.len(),
                    g.len(),
                    m.len()
                )));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::TrainingDiverged {
                epoch: None,
                reason: "non-finite gradient".into(),
            });
        }

        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut adam = AdamState::new(AdamConfig::default(), &[3]).unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0][..]])
            .unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_hand_value() {
        let mut adam = AdamState::new(AdamConfig::default(), &[1]).unwrap();
        let mut p = [1.0];
        adam.step(&mut [&mut p[..]], &[&[1.0][..]]).unwrap();
        // m̂ = 1, v̂ = 1 at t = 1
        let expected = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8));
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - 0.9999).abs() < 1e-12);
    }

    #[test]
    fn identical_arrays_get_identical_updates() {
        let mut adam = AdamState::new(AdamConfig::default(), &[2, 2]).unwrap();
        let mut a = vec![0.3, -0.7];
        let mut b = a.clone();
        for g in [[0.2, -1.5], [0.1, 0.4], [-3.0, 0.0]] {
            adam.step(&mut [&mut a[..], &mut b[..]], &[&g[..], &g[..]])
                .unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_and_divergence() {
        let mut adam = AdamState::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            adam.step(&mut [&mut p[..]], &[&[1.0][..]]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            adam.step(&mut [&mut p[..]], &[&[1.0, f64::NAN][..]]),
            Err(Error::TrainingDiverged { .. })
        ));
        assert_eq!(adam.steps(), 0);
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(bad, &[1]).is_err());
    }
}
