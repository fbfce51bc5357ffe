//! Weight file: one JSON document holding the architecture, every parameter
//! and the batch-norm running statistics.
//!
//! ```json
//! {
//!   "format": "mozart-weights",
//!   "version": 1,
//!   "input_dim": 3,
//!   "rng_seed": 7,
//!   "bn_momentum": 0.99,
//!   "bn_epsilon": 0.001,
//!   "layers": [
//!     { "kind": "dense", "units": 64, "weight": [[...], ...], "bias": [...] },
//!     { "kind": "relu" },
//!     { "kind": "dropout", "rate": 0.1 },
//!     { "kind": "batch_norm", "gamma": [...], "beta": [...],
//!       "running_mean": [...], "running_var": [...] },
//!     { "kind": "sigmoid" }
//!   ]
//! }
//! ```
//!
//! `weight` is stored row by row with shape `input width x units`. Floats are
//! written in shortest round-trip decimal form and parsed with correct
//! rounding, so save → load → save reproduces the bytes exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::{LayerParams, NetworkState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const WEIGHT_FORMAT: &str = "mozart-weights";
pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    format: String,
    version: u32,
    input_dim: usize,
    rng_seed: u64,
    bn_momentum: f64,
    bn_epsilon: f64,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerRecord {
    Dense {
        units: usize,
        weight: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Relu,
    Sigmoid,
    Dropout {
        rate: f64,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

impl NetworkState {
    pub fn to_json(&self) -> String {
        let layers = self
            .layers
            .iter()
            .zip(&self.params)
            .map(|(spec, p)| match (*spec, p) {
                (LayerSpec::Dense { units }, LayerParams::Dense { weight, bias }) => {
                    LayerRecord::Dense {
                        units,
                        weight: (0..weight.rows()).map(|r| weight.row(r).to_vec()).collect(),
                        bias: bias.clone(),
                    }
                }
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => LayerRecord::BatchNorm {
                    gamma: gamma.clone(),
                    beta: beta.clone(),
                    running_mean: running_mean.clone(),
                    running_var: running_var.clone(),
                },
                (LayerSpec::Relu, _) => LayerRecord::Relu,
                (LayerSpec::Sigmoid, _) => LayerRecord::Sigmoid,
                (LayerSpec::Dropout { rate }, _) => LayerRecord::Dropout { rate },
                (spec, _) => unreachable!("{} layer without parameters", spec.name()),
            })
            .collect();
        let file = WeightFile {
            format: WEIGHT_FORMAT.into(),
            version: WEIGHT_FORMAT_VERSION,
            input_dim: self.input_dim,
            rng_seed: self.rng_seed,
            bn_momentum: self.bn_momentum,
            bn_epsilon: self.bn_epsilon,
            layers,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("weight file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text)?;
        if file.format != WEIGHT_FORMAT {
            return Err(Error::Format(format!(
                "unexpected format tag {:?}",
                file.format
            )));
        }
        if file.version != WEIGHT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported weight file version {}",
                file.version
            )));
        }
        if file.input_dim == 0 {
            return Err(Error::Format("input_dim must be at least 1".into()));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        let mut params = Vec::with_capacity(file.layers.len());
        let mut width = file.input_dim;
        for (i, rec) in file.layers.into_iter().enumerate() {
            let bad = |msg: &str| Error::Format(format!("layer {i}: {msg}"));
            let (spec, p) = match rec {
                LayerRecord::Dense {
                    units,
                    weight,
                    bias,
                } => {
                    let w = Matrix::from_rows(&weight).map_err(|_| bad("ragged weight rows"))?;
                    if w.shape() != (width, units) || bias.len() != units {
                        return Err(bad("dense shapes do not chain"));
                    }
                    (
                        LayerSpec::Dense { units },
                        LayerParams::Dense { weight: w, bias },
                    )
                }
                LayerRecord::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    if [&gamma, &beta, &running_mean, &running_var]
                        .iter()
                        .any(|v| v.len() != width)
                    {
                        return Err(bad("batch-norm vectors do not match the layer width"));
                    }
                    if running_var.iter().any(|&v| v < 0.0) {
                        return Err(bad("negative running variance"));
                    }
                    (
                        LayerSpec::BatchNorm,
                        LayerParams::BatchNorm {
                            gamma,
                            beta,
                            running_mean,
                            running_var,
                        },
                    )
                }
                LayerRecord::Relu => (LayerSpec::Relu, LayerParams::None),
                LayerRecord::Sigmoid => (LayerSpec::Sigmoid, LayerParams::None),
                LayerRecord::Dropout { rate } => (LayerSpec::Dropout { rate }, LayerParams::None),
            };
            spec.validate().map_err(|e| bad(&e.to_string()))?;
            width = spec.output_dim(width);
            layers.push(spec);
            params.push(p);
        }
        let net = Self {
            input_dim: file.input_dim,
            layers,
            params,
            bn_momentum: file.bn_momentum,
            bn_epsilon: file.bn_epsilon,
            rng_seed: file.rng_seed,
        };
        if net
            .trainable_slices()
            .iter()
            .any(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::rng;

    #[test]
    fn round_trip_is_byte_exact() {
        let mut net = NetworkState::head_network(5, 9).unwrap();
        // give the running statistics non-trivial values
        let batch =
            Matrix::from_rows(&[[0.1, 0.7, 0.3, 0.9, 0.2], [0.4, 0.1, 0.8, 0.6, 0.5]]).unwrap();
        let (_, trace) = net
            .forward(&batch, Mode::Train, &mut rng::seeded(4))
            .unwrap();
        net.update_running_stats(&trace).unwrap();

        let first = net.to_json();
        let loaded = NetworkState::from_json(&first).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(loaded.to_json(), first);
    }

    #[test]
    fn rejects_wrong_format_and_broken_shapes() {
        let net = NetworkState::meta_network(3, 1).unwrap();
        let text = net.to_json();
        assert!(NetworkState::from_json(&text.replace("mozart-weights", "other")).is_err());
        assert!(
            NetworkState::from_json(&text.replacen("\"input_dim\": 3", "\"input_dim\": 4", 1))
                .is_err()
        );
        assert!(NetworkState::from_json("{}").is_err());
    }
}
