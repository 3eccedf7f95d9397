//! Experiment result rows and their aggregations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detector identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    IForest,
    Loda,
    Egmm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::IForest, Algorithm::Loda, Algorithm::Egmm];
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::IForest => "iforest",
            Algorithm::Loda => "loda",
            Algorithm::Egmm => "egmm",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iforest" => Ok(Algorithm::IForest),
            "loda" => Ok(Algorithm::Loda),
            "egmm" => Ok(Algorithm::Egmm),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected iforest, loda, or egmm)"
            ))),
        }
    }
}

/// Missing-value strategy named in experiment rows. `Mean` and `Mice`
/// impute then score; the rest are the detectors' native missing-aware
/// paths and only apply to some algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mean,
    Mice,
    Proportional,
    Reduced,
    Marginal,
}

impl Strategy {
    /// The valid strategy set per algorithm: imputation applies everywhere,
    /// proportional only to trees, reduced to the two ensembles that
    /// subsample features, marginalization only to density models.
    pub fn applies_to(self, algorithm: Algorithm) -> bool {
        match self {
            Strategy::Mean | Strategy::Mice => true,
            Strategy::Proportional => algorithm == Algorithm::IForest,
            Strategy::Reduced => {
                matches!(algorithm, Algorithm::IForest | Algorithm::Loda)
            }
            Strategy::Marginal => algorithm == Algorithm::Egmm,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Mean => "mean",
            Strategy::Mice => "mice",
            Strategy::Proportional => "proportional",
            Strategy::Reduced => "reduced",
            Strategy::Marginal => "marginal",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Strategy::Mean),
            "mice" => Ok(Strategy::Mice),
            "proportional" => Ok(Strategy::Proportional),
            "reduced" => Ok(Strategy::Reduced),
            "marginal" => Ok(Strategy::Marginal),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected mean, mice, proportional, reduced, or marginal)"
            ))),
        }
    }
}

/// One experiment cell result. Construction validates the
/// algorithm/strategy pairing, so an invalid combination cannot exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    dataset: String,
    algorithm: Algorithm,
    strategy: Strategy,
    rho: f64,
    replicate: usize,
    seed: u64,
    auc: f64,
}

impl EvalRecord {
    pub fn new(
        dataset: impl Into<String>,
        algorithm: Algorithm,
        strategy: Strategy,
        rho: f64,
        replicate: usize,
        seed: u64,
        auc: f64,
    ) -> Result<EvalRecord> {
        if !strategy.applies_to(algorithm) {
            return Err(Error::Config(format!(
                "strategy {strategy} does not apply to {algorithm}"
            )));
        }
        if !(0.0..=1.0).contains(&auc) {
            return Err(Error::Config(format!("AUC {auc} outside [0, 1]")));
        }
        if !rho.is_finite() || rho < 0.0 {
            return Err(Error::Config(format!("invalid rho {rho}")));
        }
        Ok(EvalRecord {
            dataset: dataset.into(),
            algorithm,
            strategy,
            rho,
            replicate,
            seed,
            auc,
        })
    }

    pub fn dataset(&self) -> &str {
        &self.dataset
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn replicate(&self) -> usize {
        self.replicate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn auc(&self) -> f64 {
        self.auc
    }

    /// Stable sort key; rho ordered by bit pattern, which matches value
    /// order for the non-negative grid.
    pub fn sort_key(&self) -> (String, Algorithm, Strategy, u64, usize) {
        (
            self.dataset.clone(),
            self.algorithm,
            self.strategy,
            self.rho.to_bits(),
            self.replicate,
        )
    }
}

/// Serialize records as `dataset,algorithm,strategy,rho,replicate,seed,auc`.
pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("dataset,algorithm,strategy,rho,replicate,seed,auc\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.dataset, r.algorithm, r.strategy, r.rho, r.replicate, r.seed, r.auc
        );
    }
    out
}

/// Relative AUC aggregated over replicates for one summary key.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeAuc {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    pub rho: f64,
    pub mean_relative_auc: f64,
    pub replicates: usize,
}

/// Per-replicate relative AUC values: each record's AUC divided by the same
/// `(dataset, algorithm, replicate)` group's AUC at `rho = 0`, preferring
/// the matching strategy's zero row (all strategies coincide there).
fn relative_values(
    records: &[EvalRecord],
) -> Result<Vec<(&EvalRecord, f64)>> {
    let mut by_strategy: BTreeMap<(&str, Algorithm, Strategy, usize), f64> = BTreeMap::new();
    let mut by_group: BTreeMap<(&str, Algorithm, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        if r.rho == 0.0 {
            by_strategy.insert(
                (r.dataset.as_str(), r.algorithm, r.strategy, r.replicate),
                r.auc,
            );
            by_group
                .entry((r.dataset.as_str(), r.algorithm, r.replicate))
                .or_default()
                .push(r.auc);
        }
    }
    records
        .iter()
        .map(|r| {
            let base = by_strategy
                .get(&(r.dataset.as_str(), r.algorithm, r.strategy, r.replicate))
                .copied()
                .or_else(|| {
                    by_group
                        .get(&(r.dataset.as_str(), r.algorithm, r.replicate))
                        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                })
                .ok_or_else(|| {
                    Error::Config(format!(
                        "no rho=0 baseline for dataset {:?}, algorithm {}, replicate {}",
                        r.dataset, r.algorithm, r.replicate
                    ))
                })?;
            Ok((r, r.auc / base))
        })
        .collect()
}

/// Mean relative AUC per `(dataset, algorithm, strategy, rho)`, averaged
/// over replicates. Errors when a group lacks its `rho = 0` baseline.
pub fn relative_auc(records: &[EvalRecord]) -> Result<Vec<RelativeAuc>> {
    let values = relative_values(records)?;
    let mut groups: BTreeMap<(String, Algorithm, Strategy, u64), (f64, usize)> = BTreeMap::new();
    for (r, rel) in values {
        let entry = groups
            .entry((r.dataset.clone(), r.algorithm, r.strategy, r.rho.to_bits()))
            .or_insert((0.0, 0));
        entry.0 += rel;
        entry.1 += 1;
    }
    Ok(groups
        .into_iter()
        .map(
            |((dataset, algorithm, strategy, rho_bits), (total, n))| RelativeAuc {
                dataset,
                algorithm,
                strategy,
                rho: f64::from_bits(rho_bits),
                mean_relative_auc: total / n as f64,
                replicates: n,
            },
        )
        .collect())
}

/// One decay-summary row: relative AUC pooled across datasets and
/// replicates with a 95% normal-approximation interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    pub rho: f64,
    pub mean_rel_auc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub samples: usize,
}

/// Pool relative AUC over datasets and replicates per
/// `(algorithm, strategy, rho)`.
pub fn summarize_decay(records: &[EvalRecord]) -> Result<Vec<DecayRow>> {
    if records.is_empty() {
        return Err(Error::Config("no records to summarize".into()));
    }
    let values = relative_values(records)?;
    let mut groups: BTreeMap<(Algorithm, Strategy, u64), Vec<f64>> = BTreeMap::new();
    for (r, rel) in values {
        groups
            .entry((r.algorithm, r.strategy, r.rho.to_bits()))
            .or_default()
            .push(rel);
    }
    Ok(groups
        .into_iter()
        .map(|((algorithm, strategy, rho_bits), vals)| {
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let half_width = if n > 1 {
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
                1.96 * (var / n as f64).sqrt()
            } else {
                0.0
            };
            DecayRow {
                algorithm,
                strategy,
                rho: f64::from_bits(rho_bits),
                mean_rel_auc: mean,
                ci_lo: mean - half_width,
                ci_hi: mean + half_width,
                samples: n,
            }
        })
        .collect())
}

/// Serialize decay rows as `algorithm,strategy,rho,mean_rel_auc,ci_lo,ci_hi`.
pub fn decay_to_csv(rows: &[DecayRow]) -> String {
    let mut out = String::from("algorithm,strategy,rho,mean_rel_auc,ci_lo,ci_hi\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.algorithm, r.strategy, r.rho, r.mean_rel_auc, r.ci_lo, r.ci_hi
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        dataset: &str,
        algorithm: Algorithm,
        strategy: Strategy,
        rho: f64,
        replicate: usize,
        auc: f64,
    ) -> EvalRecord {
        EvalRecord::new(dataset, algorithm, strategy, rho, replicate, 7, auc).unwrap()
    }

    #[test]
    fn invalid_pairs_cannot_be_constructed() {
        assert!(EvalRecord::new("d", Algorithm::Loda, Strategy::Proportional, 0.0, 0, 1, 0.5)
            .is_err());
        assert!(
            EvalRecord::new("d", Algorithm::IForest, Strategy::Marginal, 0.0, 0, 1, 0.5).is_err()
        );
        assert!(EvalRecord::new("d", Algorithm::Egmm, Strategy::Reduced, 0.0, 0, 1, 0.5).is_err());
        for algorithm in Algorithm::ALL {
            assert!(
                EvalRecord::new("d", algorithm, Strategy::Mean, 0.0, 0, 1, 0.5).is_ok(),
                "{algorithm}"
            );
            assert!(
                EvalRecord::new("d", algorithm, Strategy::Mice, 0.0, 0, 1, 0.5).is_ok(),
                "{algorithm}"
            );
        }
    }

    #[test]
    fn relative_auc_divides_by_matching_zero_row() {
        let records = vec![
            record("a", Algorithm::IForest, Strategy::Mean, 0.0, 0, 0.9),
            record("a", Algorithm::IForest, Strategy::Mean, 0.4, 0, 0.72),
        ];
        let table = relative_auc(&records).unwrap();
        let row = table.iter().find(|r| r.rho == 0.4).unwrap();
        assert!((row.mean_relative_auc - 0.8).abs() < 1e-12);
        let zero = table.iter().find(|r| r.rho == 0.0).unwrap();
        assert_eq!(zero.mean_relative_auc, 1.0);
    }

    #[test]
    fn relative_auc_averages_replicates() {
        let records = vec![
            record("a", Algorithm::Loda, Strategy::Mice, 0.0, 0, 1.0),
            record("a", Algorithm::Loda, Strategy::Mice, 0.0, 1, 1.0),
            record("a", Algorithm::Loda, Strategy::Mice, 0.2, 0, 0.8),
            record("a", Algorithm::Loda, Strategy::Mice, 0.2, 1, 0.9),
        ];
        let table = relative_auc(&records).unwrap();
        let row = table.iter().find(|r| r.rho == 0.2).unwrap();
        assert!((row.mean_relative_auc - 0.85).abs() < 1e-12);
        assert_eq!(row.replicates, 2);
    }

    #[test]
    fn missing_baseline_is_reported_with_its_group() {
        let records = vec![record("a", Algorithm::Egmm, Strategy::Mean, 0.3, 4, 0.8)];
        let err = relative_auc(&records).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"a\"") && msg.contains("egmm") && msg.contains('4'), "{msg}");
    }

    #[test]
    fn single_record_interval_is_degenerate() {
        let records = vec![record("a", Algorithm::IForest, Strategy::Mean, 0.0, 0, 0.9)];
        let rows = summarize_decay(&records).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].ci_lo, rows[0].mean_rel_auc);
        assert_eq!(rows[0].ci_hi, rows[0].mean_rel_auc);
    }

    #[test]
    fn decay_groups_by_rho_and_strategy() {
        let mut records = Vec::new();
        for rep in 0..3 {
            for rho in [0.0, 0.2, 0.4] {
                records.push(record("a", Algorithm::IForest, Strategy::Mean, rho, rep, 0.8));
                records.push(record(
                    "a",
                    Algorithm::IForest,
                    Strategy::Proportional,
                    rho,
                    rep,
                    0.9,
                ));
            }
        }
        let rows = summarize_decay(&records).unwrap();
        assert_eq!(rows.len(), 6); // 2 strategies x 3 rho values
        for row in &rows {
            assert_eq!(row.samples, 3);
        }
    }

    #[test]
    fn summary_matches_independent_reaggregation() {
        // Tiny synthetic record set re-aggregated by hand maps and loops.
        let mut records = Vec::new();
        let aucs = [
            [0.92, 0.81, 0.66],
            [0.88, 0.79, 0.70],
            [0.95, 0.85, 0.72],
        ];
        for (rep, row) in aucs.iter().enumerate() {
            for (k, rho) in [0.0, 0.3, 0.6].into_iter().enumerate() {
                records.push(record("a", Algorithm::Loda, Strategy::Reduced, rho, rep, row[k]));
            }
        }
        let rows = summarize_decay(&records).unwrap();
        for (k, rho) in [0.0, 0.3, 0.6].into_iter().enumerate() {
            let relatives: Vec<f64> = aucs.iter().map(|r| r[k] / r[0]).collect();
            let mean = relatives.iter().sum::<f64>() / 3.0;
            let var = relatives.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 2.0;
            let half = 1.96 * (var / 3.0).sqrt();
            let row = rows
                .iter()
                .find(|r| r.rho == rho && r.strategy == Strategy::Reduced)
                .unwrap();
            assert!((row.mean_rel_auc - mean).abs() < 1e-12);
            assert!((row.ci_lo - (mean - half)).abs() < 1e-12);
            assert!((row.ci_hi - (mean + half)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_shape() {
        let records = vec![record("a", Algorithm::Egmm, Strategy::Marginal, 0.5, 2, 0.75)];
        let text = records_to_csv(&records);
        assert_eq!(
            text,
            "dataset,algorithm,strategy,rho,replicate,seed,auc\na,egmm,marginal,0.5,2,7,0.75\n"
        );
    }
}
