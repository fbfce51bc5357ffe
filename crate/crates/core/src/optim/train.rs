use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::checkpoint::CheckpointState;
use super::history::{EpochRecord, TrainHistory};
use super::plateau::{PlateauConfig, PlateauState};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, ConfusionMatrix, DEFAULT_THRESHOLD};
use crate::nn::{bce_loss, Mode, NetworkState};
use crate::rng;

/// Feature rows with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<u8>,
}

impl LabeledSet {
    pub fn new(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_column(&self) -> Matrix {
        Matrix::column(self.labels.iter().map(|&y| f64::from(y)).collect())
    }

    fn subset(&self, idx: &[usize]) -> (Matrix, Matrix) {
        let labels = idx.iter().map(|&i| f64::from(self.labels[i])).collect();
        (self.features.select_rows(idx), Matrix::column(labels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds shuffling and dropout masks.
    pub seed: u64,
    /// `adam.learning_rate` is the initial learning rate.
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        self.adam.validate()?;
        self.plateau.validate()
    }
}

/// Inference-mode loss and confusion counts over a whole set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub confusion: ConfusionMatrix,
}

pub fn evaluate(net: &NetworkState, set: &LabeledSet, threshold: f64) -> Result<Evaluation> {
    let out = net.predict(&set.features)?;
    let (loss, _) = bce_loss(&out, &set.label_column())?;
    let confusion = metrics::confusion(&set.labels, out.as_slice(), threshold)?;
    Ok(Evaluation { loss, confusion })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub best: NetworkState,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: TrainHistory,
}

/// Mini-batch Adam on binary cross-entropy with reduce-on-plateau and
/// best-validation-loss checkpointing. Every epoch runs; the returned
/// weights are the checkpoint, not the final epoch's.
pub fn train(
    mut net: NetworkState,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    for set in [train_set, val_set] {
        if set.features.cols() != net.input_dim() {
            return Err(Error::Shape(format!(
                "features have {} columns, network expects {}",
                set.features.cols(),
                net.input_dim()
            )));
        }
    }

    let mut rng = rng::seeded(config.seed);
    let mut adam = AdamState::for_network(config.adam, &net)?;
    let mut plateau = PlateauState::new(config.adam.learning_rate, config.plateau)?;
    let mut checkpoint = CheckpointState::new();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        let diverged = |reason: String| Error::TrainingDiverged {
            epoch: Some(epoch),
            reason,
        };
        let lr = plateau.current_lr();
        adam.set_learning_rate(lr);
        order.shuffle(&mut rng);

        for chunk in order.chunks(config.batch_size) {
            let (x, y) = train_set.subset(chunk);
            let (out, trace) = net
                .forward(&x, Mode::Train, &mut rng)
                .map_err(|e| match e {
                    Error::TrainingDiverged { reason, .. } => diverged(reason),
                    other => other,
                })?;
            let (loss, loss_grad) = bce_loss(&out, &y)?;
            if !loss.is_finite() {
                return Err(diverged("non-finite training loss".into()));
            }
            let grads = net.backward(&trace, &loss_grad)?;
            let grad_slices = grads.slices();
            adam.step(&mut net.trainable_slices_mut(), &grad_slices)
                .map_err(|e| match e {
                    Error::TrainingDiverged { reason, .. } => diverged(reason),
                    other => other,
                })?;
            net.update_running_stats(&trace)?;
        }

        let tr = evaluate(&net, train_set, config.threshold)?;
        let va = evaluate(&net, val_set, config.threshold)?;
        if !tr.loss.is_finite() || !va.loss.is_finite() {
            return Err(diverged("non-finite epoch loss".into()));
        }
        let (tm, vm) = (tr.confusion.metrics(), va.confusion.metrics());
        history.records.push(EpochRecord {
            epoch,
            lr,
            train_loss: tr.loss,
            val_loss: va.loss,
            train_acc: tm.accuracy,
            val_acc: vm.accuracy,
            train_prec: tm.precision,
            val_prec: vm.precision,
            train_rec: tm.recall,
            val_rec: vm.recall,
        });
        checkpoint.update(epoch, va.loss, &net);
        plateau.update(va.loss);
    }

    let (best_epoch, best_val_loss, best) = checkpoint
        .into_best()
        .expect("at least one finite epoch was checkpointed");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss,
        history,
    })
}
