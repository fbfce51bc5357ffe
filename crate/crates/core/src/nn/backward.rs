use super::forward::{ForwardTrace, Mode};
use super::layer::LayerSpec;
use super::network::{LayerParams, NetworkState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads {
    None,
    Dense { weight: Matrix, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
}

/// Gradient of a scalar loss with respect to every learnable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// Gradient arrays in the same order as [`NetworkState::trainable_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrads::Dense { weight, bias } => {
                    out.push(weight.as_slice());
                    out.push(bias.as_slice());
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerGrads::None => {}
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl NetworkState {
    /// Backpropagates `loss_grad` (∂loss/∂output) through the pass recorded in
    /// `trace`, reusing its dropout masks and batch statistics.
    pub fn backward(&self, trace: &ForwardTrace, loss_grad: &Matrix) -> Result<Gradients> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "trace has {} layers, network has {}",
                trace.layers.len(),
                self.layers.len()
            )));
        }
        let out_shape = trace
            .layers
            .last()
            .map(|l| l.output.shape())
            .ok_or_else(|| Error::InvalidArgument("network has no layers".into()))?;
        if loss_grad.shape() != out_shape {
            return Err(Error::InvalidArgument(format!(
                "loss gradient {:?} does not match output {:?}",
                loss_grad.shape(),
                out_shape
            )));
        }

        let mut grads = vec![LayerGrads::None; self.layers.len()];
        let mut upstream = loss_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let t = &trace.layers[i];
            let mismatch =
                || Error::InvalidArgument(format!("trace layer {i} does not match the network"));
            upstream = match (&self.layers[i], &self.params[i]) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { weight, .. }) => {
                    if t.input.cols() != weight.rows() {
                        return Err(mismatch());
                    }
                    grads[i] = LayerGrads::Dense {
                        weight: t.input.t_matmul(&upstream)?,
                        bias: upstream.column_sums(),
                    };
                    upstream.matmul_t(weight)?
                }
                (LayerSpec::Relu, _) => {
                    let gate = t.input.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    upstream.hadamard(&gate)?
                }
                (LayerSpec::Sigmoid, _) => {
                    let slope = t.output.map(|y| y * (1.0 - y));
                    upstream.hadamard(&slope)?
                }
                (LayerSpec::Dropout { rate }, _) => match trace.mode {
                    Mode::Train => {
                        let mask = t.mask.as_ref().ok_or_else(mismatch)?;
                        let scale = 1.0 / (1.0 - rate);
                        upstream.hadamard(mask)?.map(|v| v * scale)
                    }
                    Mode::Inference => upstream,
                },
                (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, .. }) => {
                    let cache = t.batch_norm.as_ref().ok_or_else(mismatch)?;
                    let (rows, cols) = upstream.shape();
                    let xh = &cache.normalized;
                    let mut d_gamma = vec![0.0; cols];
                    let d_beta = upstream.column_sums();
                    for r in 0..rows {
                        for c in 0..cols {
                            d_gamma[c] += upstream.get(r, c) * xh.get(r, c);
                        }
                    }
                    let mut dx = Matrix::zeros(rows, cols);
                    if cache.from_batch {
                        // mean and variance depend on every row of the batch
                        let n = rows as f64;
                        for c in 0..cols {
                            let mut sum_dxh = 0.0;
                            let mut sum_dxh_xh = 0.0;
                            for r in 0..rows {
                                let dxh = upstream.get(r, c) * gamma[c];
                                sum_dxh += dxh;
                                sum_dxh_xh += dxh * xh.get(r, c);
                            }
                            for r in 0..rows {
                                let dxh = upstream.get(r, c) * gamma[c];
                                let v = cache.inv_std[c] / n
                                    * (n * dxh - sum_dxh - xh.get(r, c) * sum_dxh_xh);
                                dx.set(r, c, v);
                            }
                        }
                    } else {
                        for r in 0..rows {
                            for c in 0..cols {
                                dx.set(r, c, upstream.get(r, c) * gamma[c] * cache.inv_std[c]);
                            }
                        }
                    }
                    grads[i] = LayerGrads::BatchNorm {
                        gamma: d_gamma,
                        beta: d_beta,
                    };
                    dx
                }
                _ => return Err(mismatch()),
            };
        }
        Ok(Gradients { layers: grads })
    }
}
