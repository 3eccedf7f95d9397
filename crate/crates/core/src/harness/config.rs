//! Experiment configuration: programmatic builder plus the `[dataset]` /
//! `[algorithms]` / `[grid]` / `[seed]` config-file schema.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::egmm::EgmmFitOptions;
use crate::error::{Error, Result};
use crate::harness::records::{Algorithm, Strategy};
use crate::impute::{MiceConfig, MiceCorpus};
use crate::synth::{SynthConfig, SynthKind};

/// One dataset to run: a synthetic family or a labeled CSV file.
#[derive(Debug, Clone)]
pub enum DatasetSpec {
    Synthetic(SynthConfig),
    Csv { path: PathBuf, label_column: String },
}

impl DatasetSpec {
    /// Name used in result rows: the family name or the file stem.
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Synthetic(cfg) => cfg.kind.to_string(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }
}

/// Detector hyperparameters shared by every experiment cell.
#[derive(Debug, Clone)]
pub struct DetectorParams {
    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    pub loda_projections: usize,
    pub egmm: EgmmFitOptions,
    pub mice: MiceConfig,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            iforest_trees: 100,
            iforest_subsample: 256,
            loda_projections: 100,
            egmm: EgmmFitOptions::default(),
            mice: MiceConfig::default(),
        }
    }
}

/// Full experiment description: datasets x algorithms x strategies x rho
/// grid x replicates, all driven from one master seed.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    pub algorithms: BTreeMap<Algorithm, Vec<Strategy>>,
    pub rho_grid: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub params: DetectorParams,
}

impl ExperimentConfig {
    /// The four synthetic families with the study's default protocol:
    /// every algorithm with its full strategy set, `rho` from 0 to 0.8 in
    /// steps of 0.1, and 20 replicates.
    pub fn synthetic_default(master_seed: u64) -> ExperimentConfig {
        let datasets = [
            SynthKind::Uncorrelated,
            SynthKind::Noise,
            SynthKind::Correlated,
            SynthKind::Mixture,
        ]
        .into_iter()
        .map(|kind| DatasetSpec::Synthetic(SynthConfig::new(kind)))
        .collect();
        let mut algorithms = BTreeMap::new();
        algorithms.insert(
            Algorithm::IForest,
            vec![
                Strategy::Mean,
                Strategy::Mice,
                Strategy::Proportional,
                Strategy::Reduced,
            ],
        );
        algorithms.insert(
            Algorithm::Loda,
            vec![Strategy::Mean, Strategy::Mice, Strategy::Reduced],
        );
        algorithms.insert(
            Algorithm::Egmm,
            vec![Strategy::Mean, Strategy::Mice, Strategy::Marginal],
        );
        ExperimentConfig {
            datasets,
            algorithms,
            rho_grid: (0..=8).map(|k| k as f64 / 10.0).collect(),
            replicates: 20,
            master_seed,
            params: DetectorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        if self.algorithms.is_empty() || self.algorithms.values().all(|s| s.is_empty()) {
            return Err(Error::Config("no algorithm/strategy pairs configured".into()));
        }
        for (&algorithm, strategies) in &self.algorithms {
            for &strategy in strategies {
                if !strategy.applies_to(algorithm) {
                    return Err(Error::Config(format!(
                        "strategy {strategy} does not apply to {algorithm}"
                    )));
                }
            }
        }
        if self.rho_grid.is_empty() {
            return Err(Error::Config("empty rho grid".into()));
        }
        if !self.rho_grid.contains(&0.0) {
            return Err(Error::Config(
                "rho grid must contain 0 (the relative-AUC baseline)".into(),
            ));
        }
        if self.rho_grid.iter().any(|&r| !(0.0..=0.9).contains(&r)) {
            return Err(Error::Config("rho values must lie in [0, 0.9]".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        Ok(())
    }

    /// Parse the `[dataset]` / `[algorithms]` / `[grid]` / `[seed]` file
    /// format and validate the result.
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("config file: {}", e.message())))?;
        raw.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml_str(&text)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: RawDataset,
    algorithms: RawAlgorithms,
    grid: RawGrid,
    seed: RawSeed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    #[serde(default)]
    configs: Vec<String>,
    #[serde(default)]
    csv: Vec<PathBuf>,
    #[serde(default = "default_label_column")]
    label_column: String,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_d")]
    d: usize,
    #[serde(default = "default_anomaly_frac")]
    anomaly_frac: f64,
    #[serde(default = "default_cov_diag")]
    cov_diag: f64,
    #[serde(default = "default_anomaly_shift")]
    anomaly_shift: f64,
    #[serde(default = "default_n_noise")]
    n_noise: usize,
}

fn default_label_column() -> String {
    "label".into()
}
fn default_n() -> usize {
    3000
}
fn default_d() -> usize {
    8
}
fn default_anomaly_frac() -> f64 {
    0.10
}
fn default_cov_diag() -> f64 {
    2.0
}
fn default_anomaly_shift() -> f64 {
    2.0
}
fn default_n_noise() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgorithms {
    #[serde(default)]
    iforest: Vec<String>,
    #[serde(default)]
    loda: Vec<String>,
    #[serde(default)]
    egmm: Vec<String>,
    #[serde(default = "default_trees")]
    iforest_trees: usize,
    #[serde(default = "default_subsample")]
    iforest_subsample: usize,
    #[serde(default = "default_projections")]
    loda_projections: usize,
    #[serde(default = "default_ks")]
    egmm_ks: Vec<usize>,
    #[serde(default = "default_reps")]
    egmm_reps: usize,
    #[serde(default = "default_passes")]
    mice_passes: usize,
    #[serde(default = "default_burnin")]
    mice_burnin: usize,
    #[serde(default = "default_lambda")]
    mice_lambda: f64,
    #[serde(default = "default_corpus")]
    mice_corpus: String,
}

fn default_trees() -> usize {
    100
}
fn default_subsample() -> usize {
    256
}
fn default_projections() -> usize {
    100
}
fn default_ks() -> Vec<usize> {
    vec![3, 4, 5]
}
fn default_reps() -> usize {
    15
}
fn default_passes() -> usize {
    110
}
fn default_burnin() -> usize {
    10
}
fn default_lambda() -> f64 {
    0.01
}
fn default_corpus() -> String {
    "train+test".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    rho: Vec<f64>,
    #[serde(default = "default_replicates")]
    replicates: usize,
}

fn default_replicates() -> usize {
    20
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeed {
    master: u64,
}

impl RawConfig {
    fn build(self) -> Result<ExperimentConfig> {
        let mut datasets = Vec::new();
        for name in &self.dataset.configs {
            let kind: SynthKind = name.parse()?;
            let mut synth = SynthConfig::new(kind);
            synth.n = self.dataset.n;
            synth.d = self.dataset.d;
            synth.anomaly_frac = self.dataset.anomaly_frac;
            synth.cov_diag = self.dataset.cov_diag;
            synth.anomaly_shift = self.dataset.anomaly_shift;
            synth.n_noise = self.dataset.n_noise;
            datasets.push(DatasetSpec::Synthetic(synth));
        }
        for path in &self.dataset.csv {
            datasets.push(DatasetSpec::Csv {
                path: path.clone(),
                label_column: self.dataset.label_column.clone(),
            });
        }

        let mut algorithms = BTreeMap::new();
        for (algorithm, raw) in [
            (Algorithm::IForest, &self.algorithms.iforest),
            (Algorithm::Loda, &self.algorithms.loda),
            (Algorithm::Egmm, &self.algorithms.egmm),
        ] {
            if raw.is_empty() {
                continue;
            }
            let strategies = raw
                .iter()
                .map(|s| s.parse::<Strategy>())
                .collect::<Result<Vec<_>>>()?;
            algorithms.insert(algorithm, strategies);
        }

        let params = DetectorParams {
            iforest_trees: self.algorithms.iforest_trees,
            iforest_subsample: self.algorithms.iforest_subsample,
            loda_projections: self.algorithms.loda_projections,
            egmm: EgmmFitOptions {
                ks: self.algorithms.egmm_ks.clone(),
                reps_per_k: self.algorithms.egmm_reps,
            },
            mice: MiceConfig {
                ridge_lambda: self.algorithms.mice_lambda,
                total_passes: self.algorithms.mice_passes,
                burn_in: self.algorithms.mice_burnin,
                corpus: self.algorithms.mice_corpus.parse::<MiceCorpus>()?,
            },
        };

        let config = ExperimentConfig {
            datasets,
            algorithms,
            rho_grid: self.grid.rho,
            replicates: self.grid.replicates,
            master_seed: self.seed.master,
            params,
        };
        config.validate()?;
        Ok(config)
    }
}
