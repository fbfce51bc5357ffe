use rand::Rng;

use super::forward::ForwardTrace;
use super::layer::LayerSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Momentum of the batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.99;
/// Variance stabilizer inside the batch-norm denominator.
pub const BN_EPSILON: f64 = 1e-3;

/// Learnable parameters and running statistics owned by one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    Dense {
        /// `in_dim x units`
        weight: Matrix,
        bias: Vec<f64>,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

/// Architecture plus every parameter of a feed-forward network.
///
/// The state is never mutated by a forward or backward pass. Parameter
/// updates go through [`NetworkState::trainable_slices_mut`] and batch-norm
/// statistics through [`NetworkState::update_running_stats`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub(crate) input_dim: usize,
    pub(crate) layers: Vec<LayerSpec>,
    pub(crate) params: Vec<LayerParams>,
    pub(crate) bn_momentum: f64,
    pub(crate) bn_epsilon: f64,
    pub(crate) rng_seed: u64,
}

impl NetworkState {
    /// Builds a network with Glorot-uniform dense weights, zero biases and
    /// identity batch-norm (`γ = 1, β = 0`, running mean 0, running var 1).
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument(
                "input dimension must be at least 1".into(),
            ));
        }
        let mut rng = rng::seeded(seed);
        let mut params = Vec::with_capacity(layers.len());
        let mut width = input_dim;
        for layer in &layers {
            layer.validate()?;
            let p = match *layer {
                LayerSpec::Dense { units } => {
                    let limit = (6.0 / (width + units) as f64).sqrt();
                    let data = (0..width * units)
                        .map(|_| rng.random_range(-limit..=limit))
                        .collect();
                    LayerParams::Dense {
                        weight: Matrix::from_vec(width, units, data)?,
                        bias: vec![0.0; units],
                    }
                }
                LayerSpec::BatchNorm => LayerParams::BatchNorm {
                    gamma: vec![1.0; width],
                    beta: vec![0.0; width],
                    running_mean: vec![0.0; width],
                    running_var: vec![1.0; width],
                },
                _ => LayerParams::None,
            };
            params.push(p);
            width = layer.output_dim(width);
        }
        Ok(Self {
            input_dim,
            layers,
            params,
            bn_momentum: BN_MOMENTUM,
            bn_epsilon: BN_EPSILON,
            rng_seed: seed,
        })
    }

    /// The stacking meta-learner: 64-32-1 with ReLU, dropout 0.1 and a sigmoid output.
    pub fn meta_network(input_dim: usize, seed: u64) -> Result<Self> {
        Self::new(
            input_dim,
            vec![
                LayerSpec::Dense { units: 64 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.1 },
                LayerSpec::Dense { units: 32 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.1 },
                LayerSpec::Dense { units: 1 },
                LayerSpec::Sigmoid,
            ],
            seed,
        )
    }

    /// The classification head appended to each backbone:
    /// dense 1024, batch norm, dropout 0.4, single sigmoid unit.
    pub fn head_network(feature_dim: usize, seed: u64) -> Result<Self> {
        Self::new(
            feature_dim,
            vec![
                LayerSpec::Dense { units: 1024 },
                LayerSpec::BatchNorm,
                LayerSpec::Dropout { rate: 0.4 },
                LayerSpec::Dense { units: 1 },
                LayerSpec::Sigmoid,
            ],
            seed,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .fold(self.input_dim, |w, l| l.output_dim(w))
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn bn_momentum(&self) -> f64 {
        self.bn_momentum
    }

    pub fn bn_epsilon(&self) -> f64 {
        self.bn_epsilon
    }

    /// Shapes of the dense weight matrices, in layer order.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.params
            .iter()
            .filter_map(|p| match p {
                LayerParams::Dense { weight, .. } => Some(weight.shape()),
                _ => None,
            })
            .collect()
    }

    /// Number of learnable scalars (dense weights and biases, batch-norm γ and β).
    pub fn parameter_count(&self) -> usize {
        self.trainable_slices().iter().map(|s| s.len()).sum()
    }

    /// Learnable arrays in canonical order: per layer, dense `W` then `b`,
    /// batch-norm `γ` then `β`. Gradients and optimizer state use the same order.
    pub fn trainable_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for p in &self.params {
            match p {
                LayerParams::Dense { weight, bias } => {
                    out.push(weight.as_slice());
                    out.push(bias.as_slice());
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for p in &mut self.params {
            match p {
                LayerParams::Dense { weight, bias } => {
                    out.push(weight.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                LayerParams::None => {}
            }
        }
        out
    }

    /// Folds the per-batch statistics recorded in a train-mode trace into the
    /// batch-norm running averages. Inference traces leave the state untouched.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) -> Result<()> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "trace does not belong to this network".into(),
            ));
        }
        let momentum = self.bn_momentum;
        for (p, t) in self.params.iter_mut().zip(&trace.layers) {
            if let (
                LayerParams::BatchNorm {
                    running_mean,
                    running_var,
                    ..
                },
                Some(cache),
            ) = (p, &t.batch_norm)
            {
                if !cache.from_batch {
                    continue;
                }
                for (rm, m) in running_mean.iter_mut().zip(&cache.mean) {
                    *rm = momentum * *rm + (1.0 - momentum) * m;
                }
                for (rv, v) in running_var.iter_mut().zip(&cache.var) {
                    *rv = momentum * *rv + (1.0 - momentum) * v;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_network_shapes() {
        let net = NetworkState::meta_network(3, 7).unwrap();
        assert_eq!(net.weight_shapes(), vec![(3, 64), (64, 32), (32, 1)]);
        assert_eq!(net.output_dim(), 1);
    }

    #[test]
    fn meta_network_is_seed_deterministic() {
        let a = NetworkState::meta_network(3, 7).unwrap();
        let b = NetworkState::meta_network(3, 7).unwrap();
        assert_eq!(a, b);
        let bits = |n: &NetworkState| -> Vec<u64> {
            n.trainable_slices()
                .iter()
                .flat_map(|s| s.iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn meta_parameter_count() {
        let net = NetworkState::meta_network(1, 0).unwrap();
        let by_shape: usize = net.weight_shapes().iter().map(|&(i, o)| i * o + o).sum();
        // 1·64+64 + 64·32+32 + 32·1+1
        assert_eq!(by_shape, 2241);
        assert_eq!(net.parameter_count(), 2241);
    }

    #[test]
    fn head_network_shapes_and_count() {
        let net = NetworkState::head_network(8, 1).unwrap();
        assert_eq!(net.weight_shapes(), vec![(8, 1024), (1024, 1)]);
        match &net.params()[1] {
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                assert_eq!(gamma.len(), 1024);
                assert_eq!(beta.len(), 1024);
                assert_eq!(running_mean.len(), 1024);
                assert_eq!(running_var.len(), 1024);
            }
            other => panic!("expected batch norm, got {other:?}"),
        }
        // 2·1024+1024 + 2·1024 + 1024·1+1
        assert_eq!(
            NetworkState::head_network(2, 0).unwrap().parameter_count(),
            6145
        );
    }

    #[test]
    fn head_network_seed_changes_weights_only() {
        let a = NetworkState::head_network(8, 1).unwrap();
        let b = NetworkState::head_network(8, 2).unwrap();
        assert_eq!(a.weight_shapes(), b.weight_shapes());
        assert_ne!(a.params(), b.params());
    }

    #[test]
    fn zero_input_dim_is_rejected() {
        assert!(matches!(
            NetworkState::meta_network(0, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            NetworkState::head_network(0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn glorot_bounds_hold() {
        let net = NetworkState::meta_network(3, 11).unwrap();
        for p in net.params() {
            if let LayerParams::Dense { weight, bias } = p {
                let limit = (6.0 / (weight.rows() + weight.cols()) as f64).sqrt();
                assert!(weight.as_slice().iter().all(|w| w.abs() <= limit));
                assert!(bias.iter().all(|&b| b == 0.0));
            }
        }
    }
}
