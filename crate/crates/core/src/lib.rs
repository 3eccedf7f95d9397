//! Anomaly detection with missing-value handling.
//!
//! Three unsupervised detectors — Isolation Forest, LODA, and an ensemble
//! of Gaussian mixture models — plus the query-time strategies that let
//! them score rows containing `NA` cells: mean imputation, chained-equations
//! imputation, proportional distribution (trees), reduced feature-bagged
//! ensembles, and Gaussian marginalization. Synthetic dataset generators,
//! an MCAR injector, and an AUC-decay experiment harness round out the
//! crate; the `gapscore` binary in the companion CLI crate drives all of it.
//!
//! Training data must be fully observed; missing values are a property of
//! queries. All stochastic operations take an explicit [`SeededRng`], so
//! every pipeline is reproducible from a single master seed.

pub mod csv;
pub mod data;
pub mod egmm;
pub mod error;
pub mod harness;
pub mod iforest;
pub mod impute;
mod linalg;
pub mod loda;
pub mod model;
pub mod rng;
pub mod synth;

pub use data::{LabeledDataset, MaskedMatrix, MaskedRow};
pub use error::{Error, Result};
pub use rng::SeededRng;

pub use egmm::EgmmModel;
pub use harness::{auc, run_experiment, Algorithm, EvalRecord, ExperimentConfig, Strategy};
pub use iforest::IsolationForest;
pub use loda::LodaModel;
pub use model::Model;

/// How a detector should treat missing features in a query row.
///
/// `Baseline` requires a fully observed row (impute upstream); the other
/// variants are the native missing-aware paths and each applies to a subset
/// of the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreStrategy {
    Baseline,
    Proportional,
    Reduced,
    Marginal,
}

impl std::fmt::Display for ScoreStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScoreStrategy::Baseline => "baseline",
            ScoreStrategy::Proportional => "proportional",
            ScoreStrategy::Reduced => "reduced",
            ScoreStrategy::Marginal => "marginal",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ScoreStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ScoreStrategy::Baseline),
            "proportional" => Ok(ScoreStrategy::Proportional),
            "reduced" => Ok(ScoreStrategy::Reduced),
            "marginal" => Ok(ScoreStrategy::Marginal),
            other => Err(Error::Config(format!("unknown scoring strategy {other:?}"))),
        }
    }
}

/// An anomaly score plus a flag marking rows no detector could score
/// (e.g. a reduced ensemble with no applicable member); flagged rows carry
/// the detector's neutral constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub fallback: bool,
}

impl Score {
    pub fn real(value: f64) -> Self {
        Score {
            value,
            fallback: false,
        }
    }

    pub fn fallback(value: f64) -> Self {
        Score {
            value,
            fallback: true,
        }
    }
}
