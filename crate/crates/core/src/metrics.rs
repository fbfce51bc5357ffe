//! Confusion counts, accuracy / precision / recall / F1, and the
//! metric-by-model comparison table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `p >= DEFAULT_THRESHOLD` counts as a positive prediction.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: u64,
    pub true_negatives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_positives + self.true_negatives + self.false_positives + self.false_negatives
    }

    pub fn metrics(&self) -> MetricSet {
        compute_metrics(self)
    }
}

/// Tallies predictions against binary labels at `threshold`.
pub fn confusion(labels: &[u8], probabilities: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    if labels.len() != probabilities.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probabilities.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let mut cm = ConfusionMatrix {
        true_positives: 0,
        true_negatives: 0,
        false_positives: 0,
        false_negatives: 0,
        threshold,
    };
    for (i, (&y, &p)) in labels.iter().zip(probabilities).enumerate() {
        if p.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "probability at index {i} is NaN"
            )));
        }
        let predicted = p >= threshold;
        match (y, predicted) {
            (1, true) => cm.true_positives += 1,
            (1, false) => cm.false_negatives += 1,
            (0, true) => cm.false_positives += 1,
            (0, false) => cm.true_negatives += 1,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "label {y} at index {i} is not 0 or 1"
                )))
            }
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSet {
    /// Builds a metric set from already-known rates, deriving F1.
    pub fn from_rates(accuracy: f64, precision: f64, recall: f64) -> Self {
        Self {
            accuracy,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall and F1. Empty denominators yield 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricSet {
    let tp = cm.true_positives;
    let precision = ratio(tp, tp + cm.false_positives);
    let recall = ratio(tp, tp + cm.false_negatives);
    MetricSet::from_rates(ratio(tp + cm.true_negatives, cm.total()), precision, recall)
}

/// Formats a ratio as a percentage with two decimals, rounding half up.
pub fn percent_half_up(value: f64) -> String {
    // the 1e-9 nudge keeps decimal ties like 0.98345 from falling below .5 in binary
    let hundredths = (value * 10_000.0 + 0.5 + 1e-9).floor() as i64;
    let sign = if hundredths < 0 { "-" } else { "" };
    let h = hundredths.abs();
    format!("{sign}{}.{:02}", h / 100, h % 100)
}

pub const REPORT_ROWS: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1 Score"];

/// Metric-by-model table as comma-separated text.
///
/// ```text
/// Metric,Inception,Xception
/// Accuracy,98.47,95.29
/// Precision,96.95,91.96
/// Recall,99.78,99.47
/// F1 Score,98.34,95.57
/// ```
///
/// Values are percentages rounded half up to two decimals.
pub fn comparison_report(entries: &[(String, MetricSet)]) -> Result<String> {
    if entries.is_empty() {
        return Err(Error::InvalidArgument(
            "comparison report needs at least one model".into(),
        ));
    }
    let mut out = String::from("Metric");
    for (name, _) in entries {
        if name.contains(',') || name.contains('\n') {
            return Err(Error::InvalidArgument(format!(
                "model name {name:?} contains a delimiter"
            )));
        }
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (row, label) in REPORT_ROWS.iter().enumerate() {
        out.push_str(label);
        for (_, m) in entries {
            let v = match row {
                0 => m.accuracy,
                1 => m.precision,
                2 => m.recall,
                _ => m.f1,
            };
            out.push(',');
            out.push_str(&percent_half_up(v));
        }
        out.push('\n');
    }
    Ok(out)
}
