use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineModel;
use crate::error::{MagicError, Result};
use crate::model::FittedModel;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CheckpointModel {
    Magic(FittedModel),
    Sgp(BaselineModel),
    Mtgp(BaselineModel),
}

/// Versioned JSON document. Floats are written in shortest round-trip form,
/// so a load reproduces the saved model exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u64,
    pub model: CheckpointModel,
}

impl ModelCheckpoint {
    pub fn new(model: CheckpointModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MagicError::Io(std::io::Error::other(e)))
    }

    /// The version is checked before the model is decoded, so a newer file is
    /// rejected without partially loading anything.
    pub fn from_json(text: &str) -> Result<Self> {
        let parse_err = |e: serde_json::Error| MagicError::CheckpointParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| MagicError::CheckpointParse {
                line: 1,
                column: 1,
                message: "missing or non-integer format_version".into(),
            })?;
        if found != FORMAT_VERSION {
            return Err(MagicError::UnsupportedVersion {
                found,
                supported: FORMAT_VERSION,
            });
        }
        // Decode from the text (not the Value) so errors carry positions.
        serde_json::from_str(text).map_err(parse_err)
    }
}

pub fn save_model(path: &Path, checkpoint: &ModelCheckpoint) -> Result<()> {
    let mut text = checkpoint.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint> {
    ModelCheckpoint::from_json(&std::fs::read_to_string(path)?)
}

impl CheckpointModel {
    pub fn method(&self) -> crate::eval::Method {
        use crate::eval::Method;
        match self {
            CheckpointModel::Magic(_) => Method::Magic,
            CheckpointModel::Sgp(_) => Method::Sgp,
            CheckpointModel::Mtgp(_) => Method::Mtgp,
        }
    }

    pub fn grid(&self) -> &crate::math::TimeGrid {
        match self {
            CheckpointModel::Magic(m) => &m.grid,
            CheckpointModel::Sgp(b) | CheckpointModel::Mtgp(b) => &b.grid,
        }
    }

    /// Class, probability and completed curve for one series. Baselines
    /// threshold the probability at ½; the model classifies by MAP.
    pub fn predict(
        &self,
        sample: &crate::model::SampleSeries,
    ) -> Result<(super::PredictionRow, crate::predict::Imputation)> {
        match self {
            CheckpointModel::Magic(m) => {
                let r = crate::predict::Predictor::new(m)?.predict(sample)?;
                Ok((
                    super::PredictionRow {
                        id: r.id,
                        class: r.class,
                        probability: r.probability,
                        log_scores: Some(r.map_log_scores),
                    },
                    r.imputation,
                ))
            }
            CheckpointModel::Sgp(b) | CheckpointModel::Mtgp(b) => {
                let (p, imp) = b.predict(sample)?;
                Ok((
                    super::PredictionRow {
                        id: sample.id.clone(),
                        class: u8::from(p >= 0.5),
                        probability: p,
                        log_scores: None,
                    },
                    imp,
                ))
            }
        }
    }
}
