use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the exported history table.
pub const HISTORY_COLUMNS: [&str; 10] = [
    "epoch",
    "lr",
    "train_loss",
    "val_loss",
    "train_acc",
    "val_acc",
    "train_prec",
    "val_prec",
    "train_rec",
    "val_rec",
];

/// One row per epoch. `lr` is the rate used during that epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub train_prec: f64,
    pub val_prec: f64,
    pub train_rec: f64,
    pub val_rec: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.val_loss).collect()
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.lr).collect()
    }

    /// Comma-separated table with a header row of [`HISTORY_COLUMNS`].
    pub fn to_csv(&self) -> String {
        if self.records.is_empty() {
            return HISTORY_COLUMNS.join(",") + "\n";
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?;
        if header.iter().ne(HISTORY_COLUMNS) {
            return Err(Error::Format(format!(
                "unexpected history header {header:?}"
            )));
        }
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<EpochRecord>, _>>()
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_header() {
        let h = TrainHistory {
            records: vec![EpochRecord {
                epoch: 1,
                lr: 1e-4,
                train_loss: 0.1 + 0.2,
                val_loss: 1.0 / 3.0,
                train_acc: 0.5,
                val_acc: 0.25,
                train_prec: 1.0,
                val_prec: 0.0,
                train_rec: 0.75,
                val_rec: 0.125,
            }],
        };
        let text = h.to_csv();
        assert!(text.starts_with(
            "epoch,lr,train_loss,val_loss,train_acc,val_acc,train_prec,val_prec,train_rec,val_rec\n"
        ));
        assert_eq!(TrainHistory::from_csv(&text).unwrap(), h);
        assert!(TrainHistory::from_csv("a,b\n1,2\n").is_err());
    }
}
