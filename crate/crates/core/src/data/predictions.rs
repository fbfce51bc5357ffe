//! Per-sample base-model probabilities.
//!
//! File format: UTF-8 comma-separated text, LF line endings, header
//! `id,label,<model1>,<model2>,...`, one row per sample. Probabilities are
//! decimal floats in `[0, 1]`; labels are `0` or `1`.

use std::collections::HashMap;
use std::path::Path;

use super::registry::{parse_err, Registry};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    ids: Vec<String>,
    labels: Vec<u8>,
    model_names: Vec<String>,
    /// `samples x models`
    probabilities: Matrix,
    index: HashMap<String, usize>,
}

impl PredictionTable {
    pub fn new(
        ids: Vec<String>,
        labels: Vec<u8>,
        model_names: Vec<String>,
        probabilities: Matrix,
    ) -> Result<Self> {
        if model_names.is_empty() {
            return Err(Error::Validation(
                "prediction table needs at least one model".into(),
            ));
        }
        if ids.len() != labels.len() || probabilities.shape() != (ids.len(), model_names.len()) {
            return Err(Error::Shape(format!(
                "{} ids, {} labels, {} models but probabilities are {:?}",
                ids.len(),
                labels.len(),
                model_names.len(),
                probabilities.shape()
            )));
        }
        for (k, name) in model_names.iter().enumerate() {
            if name.is_empty() || name == "id" || name == "label" {
                return Err(Error::Validation(format!("invalid model name {name:?}")));
            }
            if model_names[..k].contains(name) {
                return Err(Error::Validation(format!("duplicate model name {name:?}")));
            }
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (r, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::Validation(format!("row {} has an empty id", r + 1)));
            }
            if index.insert(id.clone(), r).is_some() {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
            if labels[r] > 1 {
                return Err(Error::Validation(format!(
                    "id {id:?} has label {}",
                    labels[r]
                )));
            }
            for (k, name) in model_names.iter().enumerate() {
                let p = probabilities.get(r, k);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "row {} ({id}), column {name}: probability {p} outside [0, 1]",
                        r + 1
                    )));
                }
            }
        }
        Ok(Self {
            ids,
            labels,
            model_names,
            probabilities,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn num_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn probabilities(&self) -> &Matrix {
        &self.probabilities
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Probabilities of one model, in row order.
    pub fn model_column(&self, model: usize) -> Vec<f64> {
        (0..self.len())
            .map(|r| self.probabilities.get(r, model))
            .collect()
    }

    pub fn to_registry(&self) -> Registry {
        Registry::from_labels(self.ids.iter().cloned().zip(self.labels.iter().copied()))
            .expect("table ids are unique and labels binary")
    }

    /// Rows for `ids`, in that order. Fails listing every id that is absent.
    pub fn select(&self, ids: &[String]) -> Result<(Matrix, Vec<u8>)> {
        let mut rows = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in ids {
            match self.row_of(id) {
                Some(r) => rows.push(r),
                None => missing.push(id.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "no predictions for ids: {}",
                missing.join(", ")
            )));
        }
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Ok((self.probabilities.select_rows(&rows), labels))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| parse_err(&e, 1))?.clone();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(Error::Parse {
                line: 1,
                message: "empty prediction file".into(),
            });
        }
        if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header id,label,<model>..., found {:?}",
                    header.iter().collect::<Vec<_>>()
                ),
            });
        }
        let model_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let k = model_names.len();

        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| parse_err(&e, 0))?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let label = match &row[1] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("label {other:?} is not 0 or 1"),
                    })
                }
            };
            for (j, field) in row.iter().skip(2).enumerate() {
                let p: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("column {}: {field:?} is not a number", model_names[j]),
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Validation(format!(
                        "line {line} ({}), column {}: probability {p} outside [0, 1]",
                        &row[0], model_names[j]
                    )));
                }
                data.push(p);
            }
            ids.push(row[0].to_string());
            labels.push(label);
        }
        if ids.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "prediction file has no data rows".into(),
            });
        }
        let n = ids.len();
        Self::new(ids, labels, model_names, Matrix::from_vec(n, k, data)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes in the file format; floats use shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label");
        for name in &self.model_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (r, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            out.push(',');
            out.push(if self.labels[r] == 1 { '1' } else { '0' });
            for p in self.probabilities.row(r) {
                out.push(',');
                out.push_str(&p.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
