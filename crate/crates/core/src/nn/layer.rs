use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feed-forward network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize },
    Relu,
    Sigmoid,
    Dropout { rate: f64 },
    BatchNorm,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense { units: 0 } => Err(Error::InvalidArgument(
                "dense layer needs at least one unit".into(),
            )),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => Err(
                Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")),
            ),
            _ => Ok(()),
        }
    }

    /// Width of this layer's output given its input width.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match *self {
            LayerSpec::Dense { units } => units,
            _ => input_dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::BatchNorm => "batch_norm",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_layers() {
        assert!(LayerSpec::Dense { units: 0 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: 0.0 }.validate().is_ok());
    }
}
