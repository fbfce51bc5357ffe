use rand::Rng;

use super::layer::LayerSpec;
use super::network::{LayerParams, NetworkState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Inference,
}

/// Statistics a batch-norm layer used on one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// `(x - mean) * inv_std`, before `γ` and `β` are applied.
    pub normalized: Matrix,
    /// True when `mean`/`var` came from the batch (train mode).
    pub from_batch: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub input: Matrix,
    pub output: Matrix,
    /// Binary keep-mask for dropout layers; all ones in inference mode.
    pub mask: Option<Matrix>,
    pub batch_norm: Option<BatchNormCache>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    /// Dropout masks by layer index (`None` for non-dropout layers).
    pub fn masks(&self) -> Vec<Option<Matrix>> {
        self.layers.iter().map(|l| l.mask.clone()).collect()
    }
}

/// Logistic function. Saturates at the smallest positive double and the largest
/// double below one so outputs stay strictly inside `(0, 1)`.
pub fn sigmoid(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl NetworkState {
    /// Runs the network on `batch` (`rows x input_dim`). Dropout masks are drawn
    /// from `rng` in train mode; inference mode never touches `rng`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardTrace)> {
        self.forward_impl(batch, mode, &mut |_, rows, cols, rate| {
            let data = (0..rows * cols)
                .map(|_| {
                    if rng.random::<f64>() >= rate {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            Matrix::from_vec(rows, cols, data)
        })
    }

    /// Forward pass with dropout masks supplied by the caller, typically taken
    /// from an earlier trace via [`ForwardTrace::masks`].
    pub fn forward_with_masks(
        &self,
        batch: &Matrix,
        mode: Mode,
        masks: &[Option<Matrix>],
    ) -> Result<(Matrix, ForwardTrace)> {
        if masks.len() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} masks supplied for {} layers",
                masks.len(),
                self.layers.len()
            )));
        }
        self.forward_impl(batch, mode, &mut |i, rows, cols, _| match &masks[i] {
            Some(m) if m.shape() == (rows, cols) => Ok(m.clone()),
            Some(m) => Err(Error::Shape(format!(
                "mask for layer {i} is {:?}, expected {:?}",
                m.shape(),
                (rows, cols)
            ))),
            None => Err(Error::InvalidArgument(format!(
                "no mask supplied for layer {i}"
            ))),
        })
    }

    /// Inference-mode output only.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward_impl(batch, Mode::Inference, &mut |_, _, _, _| {
            unreachable!("inference never samples masks")
        })
        .map(|(out, _)| out)
    }

    fn forward_impl(
        &self,
        batch: &Matrix,
        mode: Mode,
        sample_mask: &mut dyn FnMut(usize, usize, usize, f64) -> Result<Matrix>,
    ) -> Result<(Matrix, ForwardTrace)> {
        if batch.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim
            )));
        }
        if batch.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if !batch.is_finite() {
            return Err(Error::InvalidArgument(
                "batch contains non-finite values".into(),
            ));
        }

        let mut layers = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for (i, (spec, params)) in self.layers.iter().zip(&self.params).enumerate() {
            let mut mask = None;
            let mut batch_norm = None;
            let output = match (spec, params) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
                    let mut out = current.matmul(weight)?;
                    for r in 0..out.rows() {
                        for (c, b) in bias.iter().enumerate() {
                            out.set(r, c, out.get(r, c) + b);
                        }
                    }
                    out
                }
                (LayerSpec::Relu, _) => current.map(|v| v.max(0.0)),
                (LayerSpec::Sigmoid, _) => current.map(sigmoid),
                (LayerSpec::Dropout { rate }, _) => match mode {
                    Mode::Train => {
                        let m = sample_mask(i, current.rows(), current.cols(), *rate)?;
                        let scale = 1.0 / (1.0 - rate);
                        let out = current.hadamard(&m)?.map(|v| v * scale);
                        mask = Some(m);
                        out
                    }
                    Mode::Inference => {
                        mask = Some(Matrix::filled(current.rows(), current.cols(), 1.0));
                        current.clone()
                    }
                },
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => {
                    let (mean, var, from_batch) = match mode {
                        Mode::Train => {
                            let (m, v) = batch_moments(&current);
                            (m, v, true)
                        }
                        Mode::Inference => (running_mean.clone(), running_var.clone(), false),
                    };
                    let inv_std: Vec<f64> = var
                        .iter()
                        .map(|v| 1.0 / (v + self.bn_epsilon).sqrt())
                        .collect();
                    let mut normalized = current.clone();
                    let mut out = current.clone();
                    for r in 0..current.rows() {
                        for c in 0..current.cols() {
                            let xh = (current.get(r, c) - mean[c]) * inv_std[c];
                            normalized.set(r, c, xh);
                            out.set(r, c, gamma[c] * xh + beta[c]);
                        }
                    }
                    batch_norm = Some(BatchNormCache {
                        mean,
                        var,
                        inv_std,
                        normalized,
                        from_batch,
                    });
                    out
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i} ({}) has mismatched parameters",
                        spec.name()
                    )))
                }
            };
            if !output.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch: None,
                    reason: format!("layer {i} ({}) produced non-finite values", spec.name()),
                });
            }
            layers.push(LayerTrace {
                input: current,
                output: output.clone(),
                mask,
                batch_norm,
            });
            current = output;
        }
        Ok((current, ForwardTrace { mode, layers }))
    }
}

impl NetworkState {
    /// Output of layers `start..` applied to `input`, without recording a
    /// trace. Dropout uses the supplied masks in train mode. Produces the same
    /// values as [`NetworkState::forward_with_masks`] from that layer on, at a
    /// fraction of the cost; the finite-difference checker relies on this.
    pub(crate) fn output_from(
        &self,
        start: usize,
        input: &Matrix,
        mode: Mode,
        masks: &[Option<Matrix>],
    ) -> Result<Matrix> {
        let mut current = input.clone();
        for (i, (spec, params)) in self.layers.iter().zip(&self.params).enumerate().skip(start) {
            match (spec, params) {
                (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
                    current = current.matmul(weight)?;
                    for row in current.as_mut_slice().chunks_exact_mut(bias.len()) {
                        for (v, b) in row.iter_mut().zip(bias) {
                            *v += b;
                        }
                    }
                }
                (LayerSpec::Relu, _) => current
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = v.max(0.0)),
                (LayerSpec::Sigmoid, _) => current
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = sigmoid(*v)),
                (LayerSpec::Dropout { rate }, _) => {
                    if mode == Mode::Train {
                        let m = masks
                            .get(i)
                            .and_then(Option::as_ref)
                            .filter(|m| m.shape() == current.shape())
                            .ok_or_else(|| {
                                Error::InvalidArgument(format!("no usable mask for layer {i}"))
                            })?;
                        let scale = 1.0 / (1.0 - rate);
                        for (v, k) in current.as_mut_slice().iter_mut().zip(m.as_slice()) {
                            *v = (*v * k) * scale;
                        }
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
                ) => {
                    let (mean, var) = match mode {
                        Mode::Train => batch_moments(&current),
                        Mode::Inference => (running_mean.clone(), running_var.clone()),
                    };
                    let inv_std: Vec<f64> = var
                        .iter()
                        .map(|v| 1.0 / (v + self.bn_epsilon).sqrt())
                        .collect();
                    for row in current.as_mut_slice().chunks_exact_mut(mean.len()) {
                        for (c, v) in row.iter_mut().enumerate() {
                            let xh = (*v - mean[c]) * inv_std[c];
                            *v = gamma[c] * xh + beta[c];
                        }
                    }
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "layer {i} ({}) has mismatched parameters",
                        spec.name()
                    )))
                }
            }
        }
        Ok(current)
    }
}

/// Per-column mean and biased variance.
fn batch_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for row in x.as_slice().chunks_exact(x.cols()) {
        for ((v, &xv), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = xv - m;
            *v += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn single(layers: Vec<LayerSpec>, input_dim: usize) -> NetworkState {
        NetworkState::new(input_dim, layers, 0).unwrap()
    }

    #[test]
    fn untraced_tail_matches_traced_forward() {
        let net = NetworkState::head_network(3, 4).unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.2, 0.3], [0.5, 0.0, -1.0], [2.0, 1.0, 0.25]]).unwrap();
        for mode in [Mode::Train, Mode::Inference] {
            let (out, trace) = net.forward(&x, mode, &mut rng::seeded(8)).unwrap();
            let masks = trace.masks();
            for start in 0..net.layers().len() {
                let tail = net
                    .output_from(start, &trace.layers[start].input, mode, &masks)
                    .unwrap();
                assert_eq!(tail, out, "{mode:?} from layer {start}");
            }
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let net = single(vec![LayerSpec::Sigmoid], 1);
        let out = net.predict(&Matrix::column(vec![0.0])).unwrap();
        assert_eq!(out.as_slice(), &[0.5]);
    }

    #[test]
    fn relu_definition() {
        let net = single(vec![LayerSpec::Relu], 3);
        let out = net
            .predict(&Matrix::from_rows(&[[-1.0, 0.0, 2.0]]).unwrap())
            .unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dense_affine_identity() {
        let mut net = single(vec![LayerSpec::Dense { units: 1 }], 1);
        net.params_mut()[0] = LayerParams::Dense {
            weight: Matrix::column(vec![2.0]),
            bias: vec![1.0],
        };
        let out = net.predict(&Matrix::column(vec![3.0])).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn shape_mismatch_and_non_finite_input() {
        let net = NetworkState::meta_network(3, 0).unwrap();
        assert!(matches!(
            net.predict(&Matrix::zeros(2, 4)),
            Err(Error::Shape(_))
        ));
        let bad = Matrix::from_rows(&[[0.0, f64::NAN, 1.0]]).unwrap();
        assert!(matches!(net.predict(&bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn inference_masks_are_all_ones_and_output_deterministic() {
        let net = NetworkState::meta_network(3, 5).unwrap();
        let batch = Matrix::from_rows(&[[0.1, 0.9, 0.4], [0.8, 0.2, 0.6]]).unwrap();
        let mut r = rng::seeded(1);
        let (a, trace) = net.forward(&batch, Mode::Inference, &mut r).unwrap();
        let (b, _) = net.forward(&batch, Mode::Inference, &mut r).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (2, 1));
        assert_eq!(trace.layers.len(), net.layers().len());
        for m in trace.masks().into_iter().flatten() {
            assert!(m.as_slice().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn sigmoid_output_bounds_on_extreme_inputs() {
        let net = single(vec![LayerSpec::Sigmoid], 1);
        let out = net
            .predict(&Matrix::column(vec![-1000.0, 1000.0, 40.0]))
            .unwrap();
        assert!(out.as_slice().iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn dropout_expectation_recovers_input() {
        let net = single(vec![LayerSpec::Dropout { rate: 0.4 }], 4);
        let batch = Matrix::filled(1, 4, 3.0);
        let mut r = rng::seeded(99);
        let passes = 10_000;
        let mut sums = [0.0; 4];
        for _ in 0..passes {
            let (out, _) = net.forward(&batch, Mode::Train, &mut r).unwrap();
            for (s, v) in sums.iter_mut().zip(out.as_slice()) {
                *s += v;
            }
        }
        for s in sums {
            let mean = s / passes as f64;
            assert!((mean - 3.0).abs() / 3.0 < 0.02, "mean {mean}");
        }
    }

    #[test]
    fn batch_norm_train_mode_normalizes() {
        let net = single(vec![LayerSpec::BatchNorm], 3);
        let batch = Matrix::from_rows(&[
            [1.0, -4.0, 100.0],
            [2.0, 0.5, 120.0],
            [7.0, 3.0, 90.0],
            [-3.0, 8.0, 95.5],
        ])
        .unwrap();
        let (_, trace) = net
            .forward(&batch, Mode::Train, &mut rng::seeded(0))
            .unwrap();
        let cache = trace.layers[0].batch_norm.as_ref().unwrap();
        let (mean, var) = batch_moments(&cache.normalized);
        for c in 0..3 {
            assert!(mean[c].abs() < 1e-9);
            // ε inside the denominator shrinks the variance to var / (var + ε)
            let expected = cache.var[c] / (cache.var[c] + net.bn_epsilon());
            assert!((var[c] - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_norm_unit_variance_for_wide_inputs() {
        // var(x̂) = var / (var + ε); with ε = 1e-3 unit variance to 1e-6 needs var ≳ 1e3
        let net = single(vec![LayerSpec::BatchNorm], 2);
        let batch = Matrix::from_rows(&[
            [1000.0, -4000.0],
            [2500.0, 500.0],
            [7000.0, 3000.0],
            [-3000.0, 8000.0],
        ])
        .unwrap();
        let (_, trace) = net
            .forward(&batch, Mode::Train, &mut rng::seeded(0))
            .unwrap();
        let (mean, var) = batch_moments(&trace.layers[0].batch_norm.as_ref().unwrap().normalized);
        for c in 0..2 {
            assert!(mean[c].abs() < 1e-9);
            assert!((var[c] - 1.0).abs() < 1e-6, "var {}", var[c]);
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut net = single(vec![LayerSpec::BatchNorm], 1);
        let batch = Matrix::column(vec![1.0, 3.0]);
        let (_, trace) = net
            .forward(&batch, Mode::Train, &mut rng::seeded(0))
            .unwrap();
        net.update_running_stats(&trace).unwrap();
        match &net.params()[0] {
            LayerParams::BatchNorm {
                running_mean,
                running_var,
                ..
            } => {
                assert!((running_mean[0] - 0.01 * 2.0).abs() < 1e-15);
                assert!((running_var[0] - (0.99 + 0.01 * 1.0)).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        // inference traces leave the statistics alone
        let before = net.clone();
        let (_, trace) = net
            .forward(&batch, Mode::Inference, &mut rng::seeded(0))
            .unwrap();
        net.update_running_stats(&trace).unwrap();
        assert_eq!(before, net);
    }

    #[test]
    fn frozen_masks_reproduce_train_pass() {
        let net = NetworkState::meta_network(3, 2).unwrap();
        let batch = Matrix::from_rows(&[[0.3, 0.2, 0.9], [0.5, 0.5, 0.1]]).unwrap();
        let (a, trace) = net
            .forward(&batch, Mode::Train, &mut rng::seeded(3))
            .unwrap();
        let (b, _) = net
            .forward_with_masks(&batch, Mode::Train, &trace.masks())
            .unwrap();
        assert_eq!(a, b);
    }
}
