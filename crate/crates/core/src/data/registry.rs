use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Class label of a healthy sample.
pub const NORMAL: u8 = 0;
/// Class label of a positive (COVID-19) sample.
pub const POSITIVE: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: String,
    pub label: u8,
    pub source_path: Option<String>,
}

/// Labeled samples with unique ids, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Registry {
    records: Vec<SampleRecord>,
    index: HashMap<String, usize>,
}

impl Registry {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::Validation(format!("record {i} has an empty id")));
            }
            if r.label > POSITIVE {
                return Err(Error::Validation(format!(
                    "sample {:?} has label {}, expected 0 or 1",
                    r.id, r.label
                )));
            }
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate sample id {:?}", r.id)));
            }
        }
        Ok(Self { records, index })
    }

    /// Registry from `(id, label)` pairs without source paths.
    pub fn from_labels<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, u8)>,
        S: Into<String>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(id, label)| SampleRecord {
                    id: id.into(),
                    label,
                    source_path: None,
                })
                .collect(),
        )
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_of(&self, id: &str) -> Option<u8> {
        self.index.get(id).map(|&i| self.records[i].label)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Reads `id,label[,source_path]` comma-separated text with a header row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| parse_err(&e, 1))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let with_path = match cols.as_slice() {
            ["id", "label"] => false,
            ["id", "label", "source_path"] => true,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header id,label[,source_path], found {cols:?}"),
                })
            }
        };
        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| parse_err(&e, 0))?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let label = match &row[1] {
                "0" => NORMAL,
                "1" => POSITIVE,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("label {other:?} is not 0 or 1"),
                    })
                }
            };
            records.push(SampleRecord {
                id: row[0].to_string(),
                label,
                source_path: with_path
                    .then(|| row[2].to_string())
                    .filter(|p| !p.is_empty()),
            });
        }
        if records.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "registry has no samples".into(),
            });
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn parse_err(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
