//! The stacking protocol: base-model probabilities over a stratified split
//! feed a small meta-network trained on an 80/20 subdivision of the
//! validation ids, and everything is scored on the untouched test ids.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{subdivide_validation, PredictionTable, SplitAssignment};
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix, MetricSet, DEFAULT_THRESHOLD};
use crate::nn::{make_meta_network, NetworkState};
use crate::optim::{
    evaluate, train, AdamConfig, LabeledSet, PlateauConfig, TrainConfig, TrainHistory,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_FILE: &str = "split.json";
pub const META_SPLIT_FILE: &str = "meta_split.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.csv";

/// Seeds for the three random stages of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSeeds {
    /// 80/20 subdivision of the validation ids.
    pub subdivide: u64,
    /// Glorot initialisation of the meta-network.
    pub init: u64,
    /// Mini-batch shuffling and dropout masks.
    pub train: u64,
}

impl RunSeeds {
    pub fn from_base(seed: u64) -> Self {
        Self {
            subdivide: seed,
            init: seed.wrapping_add(1),
            train: seed.wrapping_add(2),
        }
    }
}

impl Default for RunSeeds {
    fn default() -> Self {
        Self::from_base(42)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub threshold: f64,
    pub seeds: RunSeeds,
    pub plateau: PlateauConfig,
}

impl ExperimentPreset {
    fn base(name: &str, learning_rate: f64, epochs: usize) -> Self {
        Self {
            name: name.to_string(),
            learning_rate,
            epochs,
            batch_size: 32,
            threshold: DEFAULT_THRESHOLD,
            seeds: RunSeeds::default(),
            plateau: PlateauConfig::default(),
        }
    }

    pub fn mozart1() -> Self {
        Self::base("MOZART1", 1e-5, 500)
    }

    pub fn mozart2() -> Self {
        Self::base("MOZART2", 1e-4, 300)
    }

    /// Looks up a named preset, case-insensitively.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "MOZART1" => Ok(Self::mozart1()),
            "MOZART2" => Ok(Self::mozart2()),
            _ => Err(Error::InvalidArgument(format!(
                "unknown preset {name:?}; expected MOZART1 or MOZART2"
            ))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = RunSeeds::from_base(seed);
        self
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seeds.train,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            plateau: self.plateau,
            threshold: self.threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '\n']) {
            return Err(Error::InvalidArgument(format!(
                "preset name {:?} must be non-empty and free of commas",
                self.name
            )));
        }
        self.train_config().validate()
    }
}

/// Feature / label sets for the meta-learner, with the ids behind each row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub meta_train: LabeledSet,
    pub meta_val: LabeledSet,
    pub test: LabeledSet,
    pub meta_train_ids: Vec<String>,
    pub meta_val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Builds meta-features (one probability column per base model, in table
/// order) for the subdivided validation ids and the test ids.
pub fn assemble_meta_dataset(
    preds: &PredictionTable,
    split: &SplitAssignment,
    seed: u64,
) -> Result<MetaDataset> {
    split.validate()?;
    let mut missing: Vec<&str> = split
        .validation
        .iter()
        .chain(&split.test)
        .filter(|id| preds.row_of(id).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        return Err(Error::Validation(format!(
            "no predictions for ids: {}",
            missing.join(", ")
        )));
    }
    let registry = preds.to_registry();
    let (meta_train_ids, meta_val_ids) = subdivide_validation(&split.validation, &registry, seed)?;
    let build = |ids: &[String]| -> Result<LabeledSet> {
        let (x, y) = preds.select(ids)?;
        LabeledSet::new(x, y)
    };
    let data = MetaDataset {
        meta_train: build(&meta_train_ids)?,
        meta_val: build(&meta_val_ids)?,
        test: build(&split.test)?,
        meta_train_ids,
        meta_val_ids,
        test_ids: split.test.clone(),
    };
    check_hygiene(&data.meta_train_ids, &data.meta_val_ids, &data.test_ids)?;
    Ok(data)
}

fn check_hygiene(meta_train: &[String], meta_val: &[String], test: &[String]) -> Result<()> {
    let test: HashSet<&str> = test.iter().map(String::as_str).collect();
    let leaked: Vec<&str> = meta_train
        .iter()
        .chain(meta_val)
        .map(String::as_str)
        .filter(|id| test.contains(id))
        .collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "test ids reached meta training: {}",
            leaked.join(", ")
        )))
    }
}

/// Confusion counts for one model on one set, with the derived metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
}

impl From<ConfusionMatrix> for Scored {
    fn from(confusion: ConfusionMatrix) -> Self {
        Self {
            confusion,
            metrics: confusion.metrics(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackRun {
    pub preset: ExperimentPreset,
    pub split: SplitAssignment,
    pub meta_train_ids: Vec<String>,
    pub meta_val_ids: Vec<String>,
    /// Checkpointed meta-network (lowest validation loss).
    pub network: NetworkState,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub meta_train: Scored,
    pub meta_val: Scored,
    pub test: Scored,
    /// Each base model thresholded directly on the same test ids.
    pub base_test: Vec<(String, Scored)>,
    /// SHA-256 of the prediction table and split manifest this run consumed.
    pub input_digests: InputDigests,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub predictions_sha256: String,
    pub split_sha256: String,
}

impl InputDigests {
    pub fn of(preds: &PredictionTable, split: &SplitAssignment) -> Self {
        Self {
            predictions_sha256: sha256_hex(preds.to_csv().as_bytes()),
            split_sha256: sha256_hex(split.to_json().as_bytes()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Trains and evaluates one preset end to end.
pub fn run_mozart(
    preset: &ExperimentPreset,
    preds: &PredictionTable,
    split: &SplitAssignment,
) -> Result<StackRun> {
    preset.validate()?;
    let data = assemble_meta_dataset(preds, split, preset.seeds.subdivide)?;
    let net = make_meta_network(preds.num_models(), preset.seeds.init)?;
    let outcome = train(
        net,
        &data.meta_train,
        &data.meta_val,
        &preset.train_config(),
    )
    .map_err(|e| match e {
        Error::TrainingDiverged { epoch, reason } => Error::TrainingDiverged {
            epoch,
            reason: format!("{}: {reason}", preset.name),
        },
        other => other,
    })?;

    let score = |set: &LabeledSet| -> Result<Scored> {
        Ok(evaluate(&outcome.best, set, preset.threshold)?
            .confusion
            .into())
    };
    let meta_train = score(&data.meta_train)?;
    let meta_val = score(&data.meta_val)?;
    let test = score(&data.test)?;

    let mut base_test = Vec::with_capacity(preds.num_models());
    for (m, name) in preds.model_names().iter().enumerate() {
        let column = data.test.features.col_values(m);
        let cm = metrics::confusion(&data.test.labels, &column, preset.threshold)?;
        base_test.push((name.clone(), cm.into()));
    }

    Ok(StackRun {
        preset: preset.clone(),
        split: split.clone(),
        meta_train_ids: data.meta_train_ids,
        meta_val_ids: data.meta_val_ids,
        network: outcome.best,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        meta_train,
        meta_val,
        test,
        base_test,
        input_digests: InputDigests::of(preds, split),
    })
}

/// Test-set comparison: the first run's base models, then one column per run.
pub fn compare_runs(runs: &[StackRun]) -> Result<String> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no runs to compare".into()))?;
    let mut entries: Vec<(String, MetricSet)> = first
        .base_test
        .iter()
        .map(|(name, s)| (name.clone(), s.metrics))
        .collect();
    entries.extend(runs.iter().map(|r| (r.preset.name.clone(), r.test.metrics)));
    metrics::comparison_report(&entries)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    preset: ExperimentPreset,
    n_models: usize,
    model_names: Vec<String>,
    best_epoch: usize,
    best_val_loss: f64,
    inputs: InputDigests,
    artifacts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaSplit {
    meta_train: Vec<String>,
    meta_val: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricsRow {
    model: String,
    set: String,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    tp: u64,
    tn: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
}

impl StackRun {
    fn metric_rows(&self) -> Vec<MetricsRow> {
        let row = |model: &str, set: &str, s: &Scored| MetricsRow {
            model: model.to_string(),
            set: set.to_string(),
            accuracy: s.metrics.accuracy,
            precision: s.metrics.precision,
            recall: s.metrics.recall,
            f1: s.metrics.f1,
            tp: s.confusion.true_positives,
            tn: s.confusion.true_negatives,
            fp: s.confusion.false_positives,
            fn_: s.confusion.false_negatives,
        };
        let name = &self.preset.name;
        let mut rows = vec![
            row(name, "meta_train", &self.meta_train),
            row(name, "meta_val", &self.meta_val),
            row(name, "test", &self.test),
        ];
        rows.extend(self.base_test.iter().map(|(m, s)| row(m, "test", s)));
        rows
    }

    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.metric_rows() {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes every artifact of the run into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            preset: self.preset.clone(),
            n_models: self.base_test.len(),
            model_names: self.base_test.iter().map(|(n, _)| n.clone()).collect(),
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            inputs: self.input_digests.clone(),
            artifacts: [
                SPLIT_FILE,
                META_SPLIT_FILE,
                WEIGHTS_FILE,
                HISTORY_FILE,
                METRICS_FILE,
                REPORT_FILE,
            ]
            .map(String::from)
            .to_vec(),
        };
        let meta_split = MetaSplit {
            meta_train: self.meta_train_ids.clone(),
            meta_val: self.meta_val_ids.clone(),
        };
        fs::write(dir.join(MANIFEST_FILE), to_pretty_json(&manifest)?)?;
        self.split.save(dir.join(SPLIT_FILE))?;
        fs::write(dir.join(META_SPLIT_FILE), to_pretty_json(&meta_split)?)?;
        self.network.save(dir.join(WEIGHTS_FILE))?;
        self.history.save(dir.join(HISTORY_FILE))?;
        fs::write(dir.join(METRICS_FILE), self.metrics_csv()?)?;
        fs::write(
            dir.join(REPORT_FILE),
            compare_runs(std::slice::from_ref(self))?,
        )?;
        Ok(())
    }

    /// Reads a run directory written by [`StackRun::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<String> {
            fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Validation(format!("{}: {e}", dir.join(name).display())))
        };
        let manifest: RunManifest = serde_json::from_str(&read(MANIFEST_FILE)?)?;
        let split = SplitAssignment::from_json(&read(SPLIT_FILE)?)?;
        let meta_split: MetaSplit = serde_json::from_str(&read(META_SPLIT_FILE)?)?;
        let network = NetworkState::from_json(&read(WEIGHTS_FILE)?)?;
        let history = TrainHistory::from_csv(&read(HISTORY_FILE)?)?;

        let threshold = manifest.preset.threshold;
        let mut rdr = csv::Reader::from_reader(read(METRICS_FILE)?.as_bytes().to_vec().as_slice())
            .into_deserialize::<MetricsRow>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("{METRICS_FILE}: {e}")))?
            .into_iter();
        let mut take = |model: &str, set: &str| -> Result<Scored> {
            let r = rdr.next().ok_or_else(|| {
                Error::Format(format!("{METRICS_FILE}: missing row for {model}/{set}"))
            })?;
            if r.model != model || r.set != set {
                return Err(Error::Format(format!(
                    "{METRICS_FILE}: expected {model}/{set}, found {}/{}",
                    r.model, r.set
                )));
            }
            Ok(ConfusionMatrix {
                true_positives: r.tp,
                true_negatives: r.tn,
                false_positives: r.fp,
                false_negatives: r.fn_,
                threshold,
            }
            .into())
        };
        let name = manifest.preset.name.clone();
        let meta_train = take(&name, "meta_train")?;
        let meta_val = take(&name, "meta_val")?;
        let test = take(&name, "test")?;
        let mut base_test = Vec::with_capacity(manifest.n_models);
        for model in &manifest.model_names {
            base_test.push((model.clone(), take(model, "test")?));
        }
        if network.input_dim() != manifest.n_models {
            return Err(Error::Format(format!(
                "weights expect {} inputs, manifest lists {} models",
                network.input_dim(),
                manifest.n_models
            )));
        }
        check_hygiene(&meta_split.meta_train, &meta_split.meta_val, &split.test)?;
        Ok(Self {
            preset: manifest.preset,
            split,
            meta_train_ids: meta_split.meta_train,
            meta_val_ids: meta_split.meta_val,
            network,
            history,
            best_epoch: manifest.best_epoch,
            best_val_loss: manifest.best_val_loss,
            meta_train,
            meta_val,
            test,
            base_test,
            input_digests: manifest.inputs,
        })
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
