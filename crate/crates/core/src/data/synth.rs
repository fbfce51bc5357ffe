//! Synthetic correlated base learners with a closed-form Bayes combiner.
//!
//! Each sample draws a label `y` with `P(y = 1) = class_balance`, a shared
//! latent `z ~ N(0, 1)` and one private `eₖ ~ N(0, 1)` per model. Model `k`
//! scores
//!
//! ```text
//! sₖ = signal·(2y − 1) + σₖ·(√ρ·z + √(1−ρ)·eₖ)
//! ```
//!
//! and reports `pₖ = 1 / (1 + exp(−sₖ))`. Its accuracy at threshold 0.5 is
//! `Φ(signal / σₖ)`, so it falls monotonically as the noise scale grows.
//!
//! Given `y`, the score vector is Gaussian with mean `±signal·1` and covariance
//! `Σ = diag(σₖ²(1−ρ)) + ρσσᵀ`. The optimal rule is therefore linear in the
//! scores: decide positive iff `2·signal·1ᵀΣ⁻¹s + ln(π/(1−π)) ≥ 0`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::predictions::PredictionTable;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// One synthetic base model. Give either `noise` or a target `accuracy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModel {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

impl SynthModel {
    pub fn with_noise(name: impl Into<String>, noise: f64) -> Self {
        Self {
            name: name.into(),
            noise: Some(noise),
            accuracy: None,
        }
    }

    pub fn with_accuracy(name: impl Into<String>, accuracy: f64) -> Self {
        Self {
            name: name.into(),
            noise: None,
            accuracy: Some(accuracy),
        }
    }
}

fn default_signal() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    /// Fraction of positive samples.
    pub class_balance: f64,
    /// Inter-model correlation ρ of the noise.
    pub correlation: f64,
    #[serde(default = "default_signal")]
    pub signal: f64,
    pub seed: u64,
    pub models: Vec<SynthModel>,
}

/// Noise scale at which a model reaches `accuracy` for the given signal.
pub fn noise_for_accuracy(accuracy: f64, signal: f64) -> Result<f64> {
    if !(accuracy > 0.5 && accuracy <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target accuracy {accuracy} must lie in (0.5, 1]"
        )));
    }
    if accuracy == 1.0 {
        return Ok(0.0);
    }
    Ok(signal / standard_normal().inverse_cdf(accuracy))
}

/// Accuracy at threshold 0.5 of a model with this noise scale.
pub fn accuracy_for_noise(noise: f64, signal: f64) -> f64 {
    if noise == 0.0 {
        1.0
    } else {
        standard_normal().cdf(signal / noise)
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument(
                "n_samples must be at least 1".into(),
            ));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "class_balance {} outside (0, 1)",
                self.class_balance
            )));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::InvalidArgument(format!(
                "correlation {} outside [0, 1]",
                self.correlation
            )));
        }
        if !(self.signal > 0.0 && self.signal.is_finite()) {
            return Err(Error::InvalidArgument("signal must be positive".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one model is required".into(),
            ));
        }
        self.noise_scales().map(|_| ())
    }

    /// Resolved per-model noise scales.
    pub fn noise_scales(&self) -> Result<Vec<f64>> {
        self.models
            .iter()
            .map(|m| match (m.noise, m.accuracy) {
                (Some(n), None) if n >= 0.0 && n.is_finite() => Ok(n),
                (None, Some(a)) => noise_for_accuracy(a, self.signal),
                (Some(n), None) => Err(Error::InvalidArgument(format!(
                    "model {}: noise {n} must be finite and non-negative",
                    m.name
                ))),
                _ => Err(Error::InvalidArgument(format!(
                    "model {}: give exactly one of noise or accuracy",
                    m.name
                ))),
            })
            .collect()
    }
}

/// Draws the synthetic prediction table. Ids are `s00000`, `s00001`, ...
pub fn synth_base_learners(cfg: &SynthConfig) -> Result<PredictionTable> {
    cfg.validate()?;
    let noise = cfg.noise_scales()?;
    let k = noise.len();
    let shared = cfg.correlation.sqrt();
    let private = (1.0 - cfg.correlation).sqrt();
    let width = cfg.n_samples.saturating_sub(1).to_string().len().max(5);

    let mut rng = rng::seeded(cfg.seed);
    let mut ids = Vec::with_capacity(cfg.n_samples);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    let mut data = Vec::with_capacity(cfg.n_samples * k);
    for i in 0..cfg.n_samples {
        let y = u8::from(rng.random::<f64>() < cfg.class_balance);
        let z: f64 = rng.sample(StandardNormal);
        let mean = if y == 1 { cfg.signal } else { -cfg.signal };
        for &sigma in &noise {
            let e: f64 = rng.sample(StandardNormal);
            let s = mean + sigma * (shared * z + private * e);
            data.push(1.0 / (1.0 + (-s).exp()));
        }
        ids.push(format!("s{i:0width$}"));
        labels.push(y);
    }
    PredictionTable::new(
        ids,
        labels,
        cfg.models.iter().map(|m| m.name.clone()).collect(),
        Matrix::from_vec(cfg.n_samples, k, data)?,
    )
}

/// Bayes-optimal decision rule for tables drawn from a [`SynthConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct BayesCombiner {
    /// `Σ⁻¹1`
    weights: Vec<f64>,
    signal: f64,
    prior_log_odds: f64,
}

impl BayesCombiner {
    /// Needs every noise scale positive and `ρ < 1` so that `Σ` is invertible.
    pub fn from_config(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let sigma = cfg.noise_scales()?;
        let rho = cfg.correlation;
        if rho >= 1.0 || sigma.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument(
                "Bayes combiner needs positive noise scales and correlation below 1".into(),
            ));
        }
        // Sherman–Morrison on Σ = D + ρσσᵀ with D = diag(σₖ²(1−ρ))
        let d_inv: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s * (1.0 - rho))).collect();
        let d_inv_one = d_inv.clone();
        let d_inv_sigma: Vec<f64> = d_inv.iter().zip(&sigma).map(|(d, s)| d * s).collect();
        let sigma_d_inv_one: f64 = sigma.iter().zip(&d_inv_one).map(|(s, d)| s * d).sum();
        let sigma_d_inv_sigma: f64 = sigma.iter().zip(&d_inv_sigma).map(|(s, d)| s * d).sum();
        let coeff = rho * sigma_d_inv_one / (1.0 + rho * sigma_d_inv_sigma);
        let weights = d_inv_one
            .iter()
            .zip(&d_inv_sigma)
            .map(|(a, b)| a - coeff * b)
            .collect();
        Ok(Self {
            weights,
            signal: cfg.signal,
            prior_log_odds: (cfg.class_balance / (1.0 - cfg.class_balance)).ln(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Posterior log-odds of the positive class given one row of probabilities.
    pub fn log_odds(&self, probabilities: &[f64]) -> f64 {
        let score: f64 = self
            .weights
            .iter()
            .zip(probabilities)
            .map(|(w, &p)| w * (p.ln() - (1.0 - p).ln()))
            .sum();
        2.0 * self.signal * score + self.prior_log_odds
    }

    pub fn decide(&self, probabilities: &[f64]) -> u8 {
        u8::from(self.log_odds(probabilities) >= 0.0)
    }

    /// Fraction of rows of `table` the rule classifies correctly.
    pub fn empirical_accuracy(&self, table: &PredictionTable) -> f64 {
        let p = table.probabilities();
        let correct = (0..table.len())
            .filter(|&r| self.decide(p.row(r)) == table.labels()[r])
            .count();
        correct as f64 / table.len() as f64
    }

    /// Expected accuracy of the rule under the generative model.
    pub fn expected_accuracy(&self, class_balance: f64) -> f64 {
        // wᵀs given y is N(±signal·q, q) with q = 1ᵀΣ⁻¹1
        let q: f64 = self.weights.iter().sum();
        let tau = -self.prior_log_odds / (2.0 * self.signal);
        let sd = q.sqrt();
        let n = standard_normal();
        class_balance * n.cdf((self.signal * q - tau) / sd)
            + (1.0 - class_balance) * n.cdf((tau + self.signal * q) / sd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{confusion, DEFAULT_THRESHOLD};

    fn cfg(noise: &[f64], rho: f64, n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples: n,
            class_balance: 0.5,
            correlation: rho,
            signal: 1.0,
            seed,
            models: noise
                .iter()
                .enumerate()
                .map(|(i, &s)| SynthModel::with_noise(format!("m{i}"), s))
                .collect(),
        }
    }

    fn accuracies(t: &PredictionTable) -> Vec<f64> {
        (0..t.num_models())
            .map(|k| {
                confusion(t.labels(), &t.model_column(k), DEFAULT_THRESHOLD)
                    .unwrap()
                    .metrics()
                    .accuracy
            })
            .collect()
    }

    #[test]
    fn pure_noise_is_a_coin_flip() {
        let t = synth_base_learners(&cfg(&[1e6, 1e6, 1e6], 0.0, 10_000, 5)).unwrap();
        for a in accuracies(&t) {
            assert!((a - 0.5).abs() < 0.03, "{a}");
        }
    }

    #[test]
    fn full_correlation_without_noise_gives_identical_columns() {
        let t = synth_base_learners(&cfg(&[0.0, 0.0, 0.0], 1.0, 500, 1)).unwrap();
        let c0 = t.model_column(0);
        assert_eq!(c0, t.model_column(1));
        assert_eq!(c0, t.model_column(2));
        assert_eq!(accuracies(&t), vec![1.0; 3]);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synth_base_learners(&cfg(&[0.5, 0.7], 0.3, 100, 8)).unwrap();
        let b = synth_base_learners(&cfg(&[0.5, 0.7], 0.3, 100, 8)).unwrap();
        let c = synth_base_learners(&cfg(&[0.5, 0.7], 0.3, 100, 9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn accuracy_targets_resolve_to_noise() {
        let n = noise_for_accuracy(0.95, 1.0).unwrap();
        let back = accuracy_for_noise(n, 1.0);
        assert!((back - 0.95).abs() < 1e-9, "{back}");
        assert_eq!(noise_for_accuracy(1.0, 1.0).unwrap(), 0.0);
        assert!(noise_for_accuracy(0.4, 1.0).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(&[0.5], 0.2, 10, 0);
        c.class_balance = 1.0;
        assert!(synth_base_learners(&c).is_err());
        let mut c = cfg(&[0.5], 1.5, 10, 0);
        assert!(synth_base_learners(&c).is_err());
        c.correlation = 0.5;
        c.models[0].accuracy = Some(0.9);
        assert!(synth_base_learners(&c).is_err());
    }

    /// Brute-force Bayes rule: Gaussian class likelihoods evaluated directly
    /// with an explicitly inverted covariance.
    fn brute_force_log_odds(c: &SynthConfig, row: &[f64]) -> f64 {
        let sigma = c.noise_scales().unwrap();
        let k = sigma.len();
        let mut cov = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                cov[i][j] = c.correlation * sigma[i] * sigma[j];
                if i == j {
                    cov[i][j] += sigma[i] * sigma[i] * (1.0 - c.correlation);
                }
            }
        }
        // Gauss–Jordan inverse
        let mut a: Vec<Vec<f64>> = cov
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                r.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        for col in 0..k {
            let piv = a[col][col];
            for v in a[col].iter_mut() {
                *v /= piv;
            }
            for r in 0..k {
                if r != col {
                    let f = a[r][col];
                    let pivot_row = a[col].clone();
                    for (v, p) in a[r].iter_mut().zip(pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        let s: Vec<f64> = row.iter().map(|p| (p / (1.0 - p)).ln()).collect();
        let quad = |mu: f64| -> f64 {
            let d: Vec<f64> = s.iter().map(|v| v - mu).collect();
            (0..k)
                .map(|i| (0..k).map(|j| d[i] * a[i][k + j] * d[j]).sum::<f64>())
                .sum()
        };
        -0.5 * quad(c.signal)
            + 0.5 * quad(-c.signal)
            + (c.class_balance / (1.0 - c.class_balance)).ln()
    }

    #[test]
    fn closed_form_matches_brute_force_likelihood_ratio() {
        let mut c = cfg(&[0.6, 0.55, 0.5], 0.4, 200, 3);
        c.class_balance = 0.3;
        let bayes = BayesCombiner::from_config(&c).unwrap();
        let t = synth_base_learners(&c).unwrap();
        for r in 0..t.len() {
            let row = t.probabilities().row(r);
            let a = bayes.log_odds(row);
            let b = brute_force_log_odds(&c, row);
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn bayes_combiner_beats_best_single_model() {
        let c = SynthConfig {
            n_samples: 10_000,
            class_balance: 0.5,
            correlation: 0.5,
            signal: 1.0,
            seed: 42,
            models: vec![
                SynthModel::with_accuracy("inception", 0.95),
                SynthModel::with_accuracy("xception", 0.96),
                SynthModel::with_accuracy("resnet", 0.97),
            ],
        };
        let t = synth_base_learners(&c).unwrap();
        let best = accuracies(&t).into_iter().fold(0.0, f64::max);
        let bayes = BayesCombiner::from_config(&c).unwrap();
        assert!(bayes.empirical_accuracy(&t) > best);
        assert!(bayes.expected_accuracy(0.5) > 0.97);
    }
}
