//! The run configuration document (TOML).
//!
//! ```toml
//! output = "runs/exp1"
//!
//! [dataset]
//! predictions = "preds.csv"    # or `registry = "..."`, or a [dataset.synth] table
//!
//! [split]
//! seed = 7                     # or `manifest = "split.json"`
//! ratios = { train = 0.7, validation = 0.2, test = 0.1 }
//!
//! [preset]
//! names = ["MOZART1", "MOZART2"]
//! seed = 42
//! epochs = 50                  # optional overrides applied to every preset
//! ```
//!
//! Command-line flags take precedence over the document, which takes
//! precedence over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use mozart::data::{SplitRatios, SynthConfig};
use mozart::stacker::ExperimentPreset;
use mozart::{Error, Result};
use serde::Deserialize;

pub const DEFAULT_OUTPUT: &str = "mozart-out";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDocument {
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub preset: PresetSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// `id,label[,source_path]` registry, used by `split`.
    pub registry: Option<PathBuf>,
    /// Base-model prediction table.
    pub predictions: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Registry(PathBuf),
    Predictions(PathBuf),
    Synth(SynthConfig),
}

impl DatasetSection {
    pub fn source(&self) -> Result<Option<DatasetSource>> {
        let mut found = Vec::new();
        if let Some(p) = &self.registry {
            found.push(DatasetSource::Registry(p.clone()));
        }
        if let Some(p) = &self.predictions {
            found.push(DatasetSource::Predictions(p.clone()));
        }
        if let Some(s) = &self.synth {
            found.push(DatasetSource::Synth(s.clone()));
        }
        match found.len() {
            0 => Ok(None),
            1 => Ok(found.pop()),
            _ => Err(Error::InvalidArgument(
                "dataset section names more than one source; give exactly one of registry, predictions or synth".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// Existing split manifest; when set, ratios and seed are not used.
    pub manifest: Option<PathBuf>,
    pub ratios: Option<SplitRatios>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSection {
    pub names: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub threshold: Option<f64>,
}

impl PresetSection {
    /// Resolves named presets with overrides; defaults to MOZART2 alone.
    pub fn resolve(&self, seed_flag: Option<u64>) -> Result<Vec<ExperimentPreset>> {
        let names = self
            .names
            .clone()
            .unwrap_or_else(|| vec!["MOZART2".to_string()]);
        if names.is_empty() {
            return Err(Error::InvalidArgument("preset.names is empty".into()));
        }
        let mut out = Vec::with_capacity(names.len());
        for name in &names {
            let mut p = ExperimentPreset::by_name(name)?;
            if let Some(seed) = seed_flag.or(self.seed) {
                p = p.with_seed(seed);
            }
            if let Some(lr) = self.learning_rate {
                p.learning_rate = lr;
            }
            if let Some(e) = self.epochs {
                p.epochs = e;
            }
            if let Some(b) = self.batch_size {
                p.batch_size = b;
            }
            if let Some(t) = self.threshold {
                p.threshold = t;
            }
            p.validate()?;
            if out.iter().any(|q: &ExperimentPreset| q.name == p.name) {
                return Err(Error::InvalidArgument(format!(
                    "preset {} listed twice",
                    p.name
                )));
            }
            out.push(p);
        }
        Ok(out)
    }
}

impl RunConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: Self = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        doc.dataset.source()?;
        Ok(doc)
    }

    /// Reads a document; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut doc = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(inner) = p {
                    if inner.is_relative() {
                        *inner = base.join(&*inner);
                    }
                }
            };
            fix(&mut doc.output);
            fix(&mut doc.dataset.registry);
            fix(&mut doc.dataset.predictions);
            fix(&mut doc.split.manifest);
        }
        Ok(doc)
    }
}

/// Reads a UTF-8 file, naming the path on failure.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}
