//! Central finite-difference check of the analytic gradients.

use super::forward::Mode;
use super::loss::bce_loss;
use super::network::{LayerParams, NetworkState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Worst disagreement found by [`finite_diff_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(array, index)` in [`NetworkState::trainable_slices`] order.
    pub worst_param: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Largest relative error between analytic and central-difference gradients
/// of the BCE loss over all learnable parameters.
///
/// The error is `|a - n| / max(|a|, |n|, floor)` where `floor` is the rounding
/// noise of the central difference, `1e4 · ε_mach · max(|L|, 1) / epsilon`.
/// Gradients that are both below that level (a dense bias feeding train-mode
/// batch norm has an exactly zero gradient, for instance) count as agreeing.
///
/// `masks` freezes dropout in train mode (see [`crate::nn::ForwardTrace::masks`]);
/// in inference mode it may be all `None`.
pub fn finite_diff_check(
    net: &NetworkState,
    batch: &Matrix,
    labels: &Matrix,
    epsilon: f64,
    mode: Mode,
    masks: &[Option<Matrix>],
) -> Result<f64> {
    finite_diff_report(net, batch, labels, epsilon, mode, masks).map(|r| r.max_rel_error)
}

pub fn finite_diff_report(
    net: &NetworkState,
    batch: &Matrix,
    labels: &Matrix,
    epsilon: f64,
    mode: Mode,
    masks: &[Option<Matrix>],
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    let (out, trace) = net.forward_with_masks(batch, mode, masks)?;
    let (loss, loss_grad) = bce_loss(&out, labels)?;
    let floor = 1e4 * f64::EPSILON * loss.abs().max(1.0) / epsilon;
    let grads = net.backward(&trace, &loss_grad)?;
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    // a parameter of layer `l` only changes layers `l..`, so each probe
    // restarts from the cached input of its own layer
    let owners = param_layers(net);
    let loss_at = |n: &NetworkState, layer: usize| -> Result<f64> {
        let out = n.output_from(layer, &trace.layers[layer].input, mode, masks)?;
        Ok(bce_loss(&out, labels)?.0)
    };

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (a, values) in analytic.iter().enumerate() {
        for (j, &g) in values.iter().enumerate() {
            let original = probe.trainable_slices()[a][j];
            probe.trainable_slices_mut()[a][j] = original + epsilon;
            let up = loss_at(&probe, owners[a])?;
            probe.trainable_slices_mut()[a][j] = original - epsilon;
            let down = loss_at(&probe, owners[a])?;
            probe.trainable_slices_mut()[a][j] = original;

            let numeric = (up - down) / (2.0 * epsilon);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = (a, j);
                report.analytic = g;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Layer index owning each array of [`NetworkState::trainable_slices`].
fn param_layers(net: &NetworkState) -> Vec<usize> {
    net.params()
        .iter()
        .enumerate()
        .flat_map(|(i, p)| match p {
            LayerParams::Dense { .. } | LayerParams::BatchNorm { .. } => vec![i, i],
            LayerParams::None => vec![],
        })
        .collect()
}
