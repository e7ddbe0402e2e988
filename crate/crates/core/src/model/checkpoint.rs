use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, PathwayModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_FORMAT: &str = "focal-anneal-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    d_in: usize,
    d_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// On-disk pathway model. Parameters are stored as `f64` whatever the
/// in-memory scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub dims: Vec<usize>,
    pub num_classes: usize,
    pub frozen_encoder: bool,
    pub fingerprint: String,
    encoder: Vec<LayerRecord>,
    head: LayerRecord,
}

fn record<T: Scalar>(layer: &Dense<T>) -> LayerRecord {
    LayerRecord {
        d_in: layer.d_in,
        d_out: layer.d_out,
        weights: layer.weights.iter().map(|w| w.as_f64()).collect(),
        biases: layer.biases.iter().map(|b| b.as_f64()).collect(),
    }
}

fn restore<T: Scalar>(rec: &LayerRecord) -> Dense<T> {
    Dense {
        d_in: rec.d_in,
        d_out: rec.d_out,
        weights: rec.weights.iter().map(|&w| T::lit(w)).collect(),
        biases: rec.biases.iter().map(|&b| T::lit(b)).collect(),
    }
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &PathwayModel<T>, fingerprint: &str) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: model.dims(),
            num_classes: model.num_classes(),
            frozen_encoder: model.frozen_encoder,
            fingerprint: fingerprint.into(),
            encoder: model.encoder.iter().map(record).collect(),
            head: record(&model.head),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<PathwayModel<T>> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        let model = PathwayModel::from_layers(
            self.encoder.iter().map(restore).collect(),
            restore(&self.head),
            self.frozen_encoder,
        )?;
        if model.dims() != self.dims || model.num_classes() != self.num_classes {
            return Err(Error::Shape("checkpoint header disagrees with its layers".into()));
        }
        Ok(model)
    }
}

pub fn save_checkpoint<T: Scalar>(model: &PathwayModel<T>, fingerprint: &str, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_model(model, fingerprint))?;
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(PathwayModel<T>, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    Ok((ckpt.to_model()?, ckpt.fingerprint))
}
