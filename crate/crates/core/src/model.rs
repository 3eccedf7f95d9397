//! Fitted-model persistence: a self-describing JSON envelope with a format
//! version and a `kind` tag, wrapping the detector's own fields.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::MaskedMatrix;
use crate::egmm::EgmmModel;
use crate::error::{Error, Result};
use crate::harness::Algorithm;
use crate::iforest::IsolationForest;
use crate::loda::LodaModel;
use crate::{Score, ScoreStrategy};

pub const FORMAT_VERSION: u32 = 1;

/// Any fitted detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum Model {
    IForest(IsolationForest),
    Loda(LodaModel),
    Egmm(EgmmModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: Model,
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Model::IForest(_) => Algorithm::IForest,
            Model::Loda(_) => Algorithm::Loda,
            Model::Egmm(_) => Algorithm::Egmm,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::IForest(m) => m.n_features(),
            Model::Loda(m) => m.n_features(),
            Model::Egmm(m) => m.n_features(),
        }
    }

    /// Score a matrix with whichever strategy the wrapped detector supports.
    pub fn score_matrix(&self, data: &MaskedMatrix, strategy: ScoreStrategy) -> Result<Vec<Score>> {
        match self {
            Model::IForest(m) => m.score_matrix(data, strategy),
            Model::Loda(m) => m.score_matrix(data, strategy),
            Model::Egmm(m) => m.score_matrix(data, strategy),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&file)
            .map_err(|e| Error::Format(format!("model serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("model deserialization failed: {e}")))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text)
    }
}
