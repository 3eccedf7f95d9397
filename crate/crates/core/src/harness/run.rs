//! The experiment runner: fit detectors once per replicate on complete
//! data, damage copies at each `rho`, route every configured strategy, and
//! emit one AUC row per cell.
//!
//! Randomness discipline: every unit of work draws from a child generator
//! forked off the master seed by stable labels (dataset index, replicate,
//! purpose, rho index), so the record list is bit-identical across reruns
//! and across thread schedules. Chained-equations imputation runs once per
//! `(dataset, replicate, rho)` and is shared by all algorithms scoring the
//! `mice` strategy.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::csv::load_csv;
use crate::data::{LabeledDataset, MaskedMatrix};
use crate::egmm::{fit_egmm, EgmmModel};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetSpec, ExperimentConfig};
use crate::harness::metrics::auc;
use crate::harness::records::{
    decay_to_csv, records_to_csv, summarize_decay, Algorithm, EvalRecord, Strategy,
};
use crate::iforest::{fit_iforest, IsolationForest};
use crate::impute::{mean_impute_matrix, mice_impute, ColumnStats};
use crate::loda::{fit_loda, LodaModel};
use crate::rng::SeededRng;
use crate::synth::{generate, inject_mcar, SynthConfig, SynthKind};
use crate::{Score, ScoreStrategy};

// Fork labels distinguishing the purposes inside one experiment cell.
const LABEL_GENERATE: u64 = 0;
const LABEL_FIT_IFOREST: u64 = 1;
const LABEL_FIT_IFOREST_REDUCED: u64 = 2;
const LABEL_FIT_LODA: u64 = 3;
const LABEL_FIT_EGMM: u64 = 4;
const LABEL_INJECT: u64 = 5;
const LABEL_MICE: u64 = 6;

/// Run the full grid and return records sorted by
/// `(dataset, algorithm, strategy, rho, replicate)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<EvalRecord>> {
    config.validate()?;
    let master = SeededRng::new(config.master_seed);

    // CSV datasets load once; synthetic ones generate per replicate.
    let mut loaded: BTreeMap<usize, LabeledDataset> = BTreeMap::new();
    for (idx, spec) in config.datasets.iter().enumerate() {
        if let DatasetSpec::Csv { path, label_column } = spec {
            let ds = load_csv(path, Some(label_column))?;
            if !ds.features.is_fully_observed() {
                return Err(Error::UnsupportedInput(format!(
                    "dataset {:?} contains NA cells; training data must be complete",
                    spec.name()
                )));
            }
            loaded.insert(idx, ds);
        }
    }

    let cells: Vec<(usize, usize)> = (0..config.datasets.len())
        .flat_map(|d| (0..config.replicates).map(move |r| (d, r)))
        .collect();

    let nested: Vec<Vec<EvalRecord>> = cells
        .par_iter()
        .map(|&(dataset_idx, replicate)| {
            run_cell(
                config,
                &master,
                dataset_idx,
                replicate,
                loaded.get(&dataset_idx),
            )
        })
        .collect::<Result<_>>()?;

    let mut records: Vec<EvalRecord> = nested.into_iter().flatten().collect();
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(records)
}

/// Correlated and mixture replicates cycle through the off-diagonal grid.
fn replicate_synth_config(base: &SynthConfig, replicate: usize) -> SynthConfig {
    let mut cfg = base.clone();
    if matches!(cfg.kind, SynthKind::Correlated | SynthKind::Mixture) {
        cfg.rho_corr = SynthConfig::RHO_CORR_GRID[replicate % SynthConfig::RHO_CORR_GRID.len()];
    }
    cfg
}

struct FittedModels {
    iforest: Option<IsolationForest>,
    iforest_reduced: Option<IsolationForest>,
    loda: Option<LodaModel>,
    egmm: Option<EgmmModel>,
}

fn run_cell(
    config: &ExperimentConfig,
    master: &SeededRng,
    dataset_idx: usize,
    replicate: usize,
    preloaded: Option<&LabeledDataset>,
) -> Result<Vec<EvalRecord>> {
    let spec = &config.datasets[dataset_idx];
    let name = spec.name();
    let cell_rng = master.fork(&[dataset_idx as u64, replicate as u64]);
    let cell_seed = cell_rng.seed();

    let dataset: LabeledDataset = match (spec, preloaded) {
        (DatasetSpec::Synthetic(base), _) => {
            let cfg = replicate_synth_config(base, replicate);
            generate(&cfg, &mut cell_rng.fork(&[LABEL_GENERATE]))?
        }
        (DatasetSpec::Csv { .. }, Some(ds)) => ds.clone(),
        (DatasetSpec::Csv { .. }, None) => {
            return Err(Error::Config(format!("dataset {name:?} was not preloaded")))
        }
    };
    let labels = dataset.require_labels()?.to_vec();
    let complete = &dataset.features;

    let wants = |algorithm: Algorithm, strategy: Strategy| -> bool {
        config
            .algorithms
            .get(&algorithm)
            .is_some_and(|s| s.contains(&strategy))
    };
    let algo_present = |algorithm: Algorithm| config.algorithms.contains_key(&algorithm);
    let any_mean = config
        .algorithms
        .iter()
        .any(|(_, s)| s.contains(&Strategy::Mean));
    let any_mice = config
        .algorithms
        .iter()
        .any(|(_, s)| s.contains(&Strategy::Mice));

    let params = &config.params;
    let models = FittedModels {
        iforest: if algo_present(Algorithm::IForest)
            && config.algorithms[&Algorithm::IForest]
                .iter()
                .any(|s| *s != Strategy::Reduced)
        {
            Some(fit_iforest(
                complete,
                params.iforest_trees,
                params.iforest_subsample,
                false,
                &cell_rng.fork(&[LABEL_FIT_IFOREST]),
            )?)
        } else {
            None
        },
        iforest_reduced: if wants(Algorithm::IForest, Strategy::Reduced) {
            Some(fit_iforest(
                complete,
                params.iforest_trees,
                params.iforest_subsample,
                true,
                &cell_rng.fork(&[LABEL_FIT_IFOREST_REDUCED]),
            )?)
        } else {
            None
        },
        loda: if algo_present(Algorithm::Loda) {
            Some(fit_loda(
                complete,
                params.loda_projections,
                &cell_rng.fork(&[LABEL_FIT_LODA]),
            )?)
        } else {
            None
        },
        egmm: if algo_present(Algorithm::Egmm) {
            Some(fit_egmm(
                complete,
                &params.egmm,
                &cell_rng.fork(&[LABEL_FIT_EGMM]),
            )?)
        } else {
            None
        },
    };
    let stats = ColumnStats::from_matrix(complete)?;

    let mut records = Vec::new();
    for (rho_idx, &rho) in config.rho_grid.iter().enumerate() {
        let damaged = inject_mcar(
            complete,
            rho,
            &mut cell_rng.fork(&[LABEL_INJECT, rho_idx as u64]),
        )?;
        let mean_imputed = if any_mean {
            Some(mean_impute_matrix(&stats, &damaged)?)
        } else {
            None
        };
        // One imputation per (dataset, replicate, rho), shared by every
        // algorithm scoring the mice strategy.
        let mice_imputed = if any_mice {
            Some(mice_impute(
                &damaged,
                complete,
                &params.mice,
                &mut cell_rng.fork(&[LABEL_MICE, rho_idx as u64]),
            )?)
        } else {
            None
        };

        for (&algorithm, strategies) in &config.algorithms {
            for &strategy in strategies {
                let scores = score_cell(
                    algorithm,
                    strategy,
                    &models,
                    &damaged,
                    mean_imputed.as_ref(),
                    mice_imputed.as_ref(),
                )?;
                let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
                let cell_auc = auc(&values, &labels)?;
                records.push(EvalRecord::new(
                    name.clone(),
                    algorithm,
                    strategy,
                    rho,
                    replicate,
                    cell_seed,
                    cell_auc,
                )?);
            }
        }
    }
    Ok(records)
}

fn score_cell(
    algorithm: Algorithm,
    strategy: Strategy,
    models: &FittedModels,
    damaged: &MaskedMatrix,
    mean_imputed: Option<&MaskedMatrix>,
    mice_imputed: Option<&MaskedMatrix>,
) -> Result<Vec<Score>> {
    let imputed = |strategy: Strategy| -> Result<&MaskedMatrix> {
        let m = match strategy {
            Strategy::Mean => mean_imputed,
            Strategy::Mice => mice_imputed,
            _ => None,
        };
        m.ok_or_else(|| Error::Config("imputed matrix missing for strategy".into()))
    };
    let missing_model =
        || Error::Config(format!("no fitted {algorithm} model for strategy {strategy}"));

    match (algorithm, strategy) {
        (Algorithm::IForest, Strategy::Mean | Strategy::Mice) => models
            .iforest
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(imputed(strategy)?, ScoreStrategy::Baseline),
        (Algorithm::IForest, Strategy::Proportional) => models
            .iforest
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(damaged, ScoreStrategy::Proportional),
        (Algorithm::IForest, Strategy::Reduced) => models
            .iforest_reduced
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(damaged, ScoreStrategy::Reduced),
        (Algorithm::Loda, Strategy::Mean | Strategy::Mice) => models
            .loda
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(imputed(strategy)?, ScoreStrategy::Baseline),
        (Algorithm::Loda, Strategy::Reduced) => models
            .loda
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(damaged, ScoreStrategy::Reduced),
        (Algorithm::Egmm, Strategy::Mean | Strategy::Mice) => models
            .egmm
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(imputed(strategy)?, ScoreStrategy::Baseline),
        (Algorithm::Egmm, Strategy::Marginal) => models
            .egmm
            .as_ref()
            .ok_or_else(missing_model)?
            .score_matrix(damaged, ScoreStrategy::Marginal),
        _ => Err(Error::Config(format!(
            "strategy {strategy} does not apply to {algorithm}"
        ))),
    }
}

/// Write `results.csv` and `summary.csv` under `out_dir`, creating it if
/// needed. Returns the two paths.
pub fn write_outputs(records: &[EvalRecord], out_dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results_path = out_dir.join("results.csv");
    fs::write(&results_path, records_to_csv(records)).map_err(|e| Error::io(&results_path, e))?;
    let summary_path = out_dir.join("summary.csv");
    let summary = summarize_decay(records)?;
    fs::write(&summary_path, decay_to_csv(&summary)).map_err(|e| Error::io(&summary_path, e))?;
    Ok((results_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::synthetic_default(4242);
        config.datasets = vec![DatasetSpec::Synthetic(SynthConfig {
            n: 300,
            ..SynthConfig::new(SynthKind::Uncorrelated)
        })];
        config.algorithms = BTreeMap::from([(
            Algorithm::IForest,
            vec![
                Strategy::Mean,
                Strategy::Mice,
                Strategy::Proportional,
                Strategy::Reduced,
            ],
        )]);
        config.rho_grid = vec![0.0, 0.3];
        config.replicates = 2;
        config.params.iforest_trees = 30;
        config.params.iforest_subsample = 64;
        config.params.mice.total_passes = 15;
        config.params.mice.burn_in = 5;
        config
    }

    #[test]
    fn produces_the_full_record_grid() {
        let records = run_experiment(&small_config()).unwrap();
        // 1 dataset x 2 replicates x 2 rho x 4 strategies
        assert_eq!(records.len(), 16);
        // Sorted by key, unique keys.
        let mut keys: Vec<_> = records.iter().map(|r| r.sort_key()).collect();
        let sorted = keys.clone();
        keys.dedup();
        assert_eq!(keys.len(), 16);
        assert_eq!(keys, sorted);
    }

    #[test]
    fn zero_rho_strategies_coincide_within_a_replicate() {
        let records = run_experiment(&small_config()).unwrap();
        for replicate in 0..2 {
            let at_zero: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.rho() == 0.0 && r.replicate() == replicate)
                .collect();
            let mean = at_zero
                .iter()
                .find(|r| r.strategy() == Strategy::Mean)
                .unwrap()
                .auc();
            for r in &at_zero {
                if r.strategy() != Strategy::Reduced {
                    assert_eq!(r.auc(), mean, "{:?}", r.strategy());
                }
            }
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let a = run_experiment(&small_config()).unwrap();
        let b = run_experiment(&small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(records_to_csv(&a), records_to_csv(&b));
    }

    #[test]
    fn different_master_seeds_differ() {
        let mut config = small_config();
        config.master_seed = 77;
        let a = run_experiment(&small_config()).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn invalid_pairs_fail_before_any_work() {
        let mut config = small_config();
        config
            .algorithms
            .insert(Algorithm::Loda, vec![Strategy::Proportional]);
        let err = run_experiment(&config).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn csv_datasets_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        // 40 nominals near 0, 5 anomalies near 6.
        let mut text = String::from("f0,f1,label\n");
        let mut rng = SeededRng::new(5);
        use rand::Rng;
        for _ in 0..40 {
            text.push_str(&format!(
                "{},{},0\n",
                rng.random::<f64>(),
                rng.random::<f64>()
            ));
        }
        for _ in 0..5 {
            text.push_str(&format!(
                "{},{},1\n",
                6.0 + rng.random::<f64>(),
                6.0 + rng.random::<f64>()
            ));
        }
        std::fs::write(&path, text).unwrap();

        let mut config = small_config();
        config.datasets = vec![DatasetSpec::Csv {
            path: path.clone(),
            label_column: "label".into(),
        }];
        config.params.iforest_subsample = 32;
        let records = run_experiment(&config).unwrap();
        assert_eq!(records.len(), 16);
        assert!(records.iter().all(|r| r.dataset() == "tiny"));
        // Complete-data AUC on this toy split should be close to perfect.
        let zero_mean = records
            .iter()
            .find(|r| r.rho() == 0.0 && r.strategy() == Strategy::Mean)
            .unwrap();
        assert!(zero_mean.auc() > 0.9, "auc {}", zero_mean.auc());
    }

    #[test]
    fn outputs_land_in_the_requested_directory() {
        let records = run_experiment(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (results, summary) = write_outputs(&records, dir.path().join("run1")).unwrap();
        let results_text = std::fs::read_to_string(results).unwrap();
        assert!(results_text.starts_with("dataset,algorithm,strategy,rho,replicate,seed,auc\n"));
        assert_eq!(results_text.lines().count(), 17);
        let summary_text = std::fs::read_to_string(summary).unwrap();
        assert!(summary_text.starts_with("algorithm,strategy,rho,mean_rel_auc,ci_lo,ci_hi\n"));
        // 4 strategies x 2 rho values
        assert_eq!(summary_text.lines().count(), 9);
    }
}
