use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to the predictions.
///
/// Inside the clamp window the gradient is `-(y/p - (1-y)/(1-p)) / n`; outside
/// it the clamped loss is flat and the gradient is zero.
pub fn bce_loss(predictions: &Matrix, labels: &Matrix) -> Result<(f64, Matrix)> {
    if predictions.cols() != 1 || predictions.shape() != labels.shape() {
        return Err(Error::Shape(format!(
            "predictions {:?} and labels {:?} must both be n x 1",
            predictions.shape(),
            labels.shape()
        )));
    }
    let n = predictions.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty prediction set".into()));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (i, (&p, &y)) in predictions
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .enumerate()
    {
        if y != 0.0 && y != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "label {y} at row {i} is not 0 or 1"
            )));
        }
        if !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "prediction at row {i} is not finite"
            )));
        }
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= if y == 1.0 { pc.ln() } else { (1.0 - pc).ln() };
        let g = if p != pc {
            0.0
        } else if y == 1.0 {
            -1.0 / pc
        } else {
            1.0 / (1.0 - pc)
        };
        grad.push(g / n as f64);
    }
    Ok((total / n as f64, Matrix::column(grad)))
}
