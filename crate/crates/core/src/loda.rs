//! LODA: an ensemble of sparse random projections paired with fixed-width
//! histogram density estimators.
//!
//! Each projection keeps `ceil(sqrt(d))` nonzero standard-normal weights;
//! training rows are projected to the line and binned with the bin count
//! chosen by penalized maximum likelihood. The anomaly score of a query is
//! the mean negative log density across projections. Under the reduced
//! strategy only projections whose nonzero columns are all observed in the
//! query participate; when none apply the model falls back to a flagged
//! neutral constant (its mean training score).

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, MaskedRow};
use crate::error::{Error, Result};
use crate::iforest::reduced_feature_count;
use crate::rng::SeededRng;
use crate::{Score, ScoreStrategy};

/// A sparse projection vector with exactly `ceil(sqrt(d))` nonzero entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    /// Dense weight vector; entries outside `nonzero` are exactly 0.
    pub weights: Vec<f64>,
    /// Sorted column indices of the nonzero weights.
    pub nonzero: Vec<usize>,
}

impl Projection {
    /// Dot product using only the nonzero columns. Returns `None` when any
    /// needed column is missing in the row.
    pub fn project(&self, row: MaskedRow<'_>) -> Option<f64> {
        let mut sum = 0.0;
        for &j in &self.nonzero {
            sum += self.weights[j] * row.get(j)?;
        }
        Some(sum)
    }

    /// True when every nonzero column of the projection is observed.
    pub fn applicable(&self, row: MaskedRow<'_>) -> bool {
        self.nonzero.iter().all(|&j| row.is_observed(j))
    }
}

/// Fixed-width histogram density estimator over one projected axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    /// Left edge of bin 0.
    pub origin: f64,
    /// Bin width (> 0).
    pub width: f64,
    /// Per-bin densities; integrates to 1 over the training support.
    pub densities: Vec<f64>,
    /// Number of training points the histogram was built from.
    pub n_train: usize,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.densities.len()
    }

    /// Floor density used for empty bins and out-of-support queries; keeps
    /// `-log p` finite while still ranking extreme points as anomalous.
    pub fn floor_density(&self) -> f64 {
        1.0 / (self.n_train as f64 * self.width * (self.n_bins() as f64 + 1.0))
    }

    /// Density at a point, with the floor applied to empty bins and to
    /// points outside the training support.
    pub fn density(&self, z: f64) -> f64 {
        let floor = self.floor_density();
        let upper = self.origin + self.width * self.n_bins() as f64;
        if z < self.origin || z > upper {
            return floor;
        }
        let idx = bin_index(z, self.origin, self.width, self.n_bins());
        self.densities[idx].max(floor)
    }
}

/// Bin assignment shared by fitting and evaluation: values at the upper
/// edge fold into the last bin.
fn bin_index(z: f64, origin: f64, width: f64, n_bins: usize) -> usize {
    let idx = ((z - origin) / width).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(n_bins - 1)
    }
}

/// Penalized-likelihood bin count: the `B` in `[1, max(1, 3*floor(n/ln n))]`
/// maximizing `sum_b N_b ln(B N_b / n) - (B - 1 + (ln B)^2.5)` for
/// equal-width bins over `[min z, max z]`, with `0 ln 0 = 0`. Ties break
/// toward smaller `B`; constant input yields `B = 1`.
pub fn br_bin_count(z: &[f64]) -> Result<usize> {
    let n = z.len();
    if n < 2 {
        return Err(Error::Config(
            "bin-count selection needs at least 2 values".into(),
        ));
    }
    let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(
            "bin-count selection needs finite values".into(),
        ));
    }
    if lo == hi {
        return Ok(1);
    }

    let cap = br_search_cap(n);
    let nf = n as f64;
    let mut best_b = 1;
    let mut best_score = f64::NEG_INFINITY;
    let mut counts: Vec<usize> = Vec::with_capacity(cap);
    for b in 1..=cap {
        let width = (hi - lo) / b as f64;
        counts.clear();
        counts.resize(b, 0);
        for &v in z {
            counts[bin_index(v, lo, width, b)] += 1;
        }
        let bf = b as f64;
        let log_likelihood: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let cf = c as f64;
                cf * (bf * cf / nf).ln()
            })
            .sum();
        let penalty = bf - 1.0 + bf.ln().powf(2.5);
        let score = log_likelihood - penalty;
        if score > best_score {
            best_score = score;
            best_b = b;
        }
    }
    Ok(best_b)
}

/// Upper end of the bin-count search range.
pub fn br_search_cap(n: usize) -> usize {
    ((n as f64 / (n as f64).ln()).floor() as usize * 3).max(1)
}

fn fit_histogram(z: &[f64]) -> Result<Histogram> {
    let n = z.len();
    let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Degenerate projection: a single unit-width bin holding everything.
        return Ok(Histogram {
            origin: lo - 0.5,
            width: 1.0,
            densities: vec![1.0],
            n_train: n,
        });
    }
    let n_bins = br_bin_count(z)?;
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &v in z {
        counts[bin_index(v, lo, width, n_bins)] += 1;
    }
    let densities = counts
        .iter()
        .map(|&c| c as f64 / (n as f64 * width))
        .collect();
    Ok(Histogram {
        origin: lo,
        width,
        densities,
        n_train: n,
    })
}

/// A fitted LODA ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LodaModel {
    pairs: Vec<(Projection, Histogram)>,
    n_features: usize,
    /// Mean training score; the flagged fallback for queries no projection
    /// can handle.
    neutral_score: f64,
}

/// Fit `n_projections` (projection, histogram) pairs on fully observed data.
pub fn fit_loda(data: &MaskedMatrix, n_projections: usize, rng: &SeededRng) -> Result<LodaModel> {
    if !data.is_fully_observed() {
        return Err(Error::UnsupportedInput(
            "training data contains missing values; LODA trains on complete data".into(),
        ));
    }
    if n_projections == 0 {
        return Err(Error::Config("need at least one projection".into()));
    }
    if data.n_rows() < 2 {
        return Err(Error::Config("need at least 2 training rows".into()));
    }

    let d = data.n_cols();
    let k = reduced_feature_count(d).min(d);
    let pairs: Vec<(Projection, Histogram)> = (0..n_projections)
        .into_par_iter()
        .map(|t| {
            let mut pair_rng = rng.fork(&[t as u64]);
            let mut nonzero = index::sample(&mut pair_rng, d, k).into_vec();
            nonzero.sort_unstable();
            let mut weights = vec![0.0; d];
            for &j in &nonzero {
                weights[j] = StandardNormal.sample(&mut pair_rng);
            }
            let projection = Projection { weights, nonzero };
            let z: Vec<f64> = (0..data.n_rows())
                .map(|i| {
                    projection
                        .project(data.row(i))
                        .expect("training data is fully observed")
                })
                .collect();
            fit_histogram(&z).map(|hist| (projection, hist))
        })
        .collect::<Result<_>>()?;

    let mut model = LodaModel {
        pairs,
        n_features: d,
        neutral_score: 0.0,
    };
    let train_scores = model.score_matrix(data, ScoreStrategy::Baseline)?;
    model.neutral_score =
        train_scores.iter().map(|s| s.value).sum::<f64>() / train_scores.len() as f64;
    Ok(model)
}

impl LodaModel {
    pub fn pairs(&self) -> &[(Projection, Histogram)] {
        &self.pairs
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn neutral_score(&self) -> f64 {
        self.neutral_score
    }

    /// Anomaly score of one query row: the mean of `-log p_t` over all
    /// projections (`Baseline`, fully observed rows only) or over the
    /// applicable set (`Reduced`), falling back to the flagged neutral
    /// constant when no projection applies.
    pub fn score(&self, row: MaskedRow<'_>, strategy: ScoreStrategy) -> Result<Score> {
        if row.len() != self.n_features {
            return Err(Error::Config(format!(
                "query has {} features, model was fitted on {}",
                row.len(),
                self.n_features
            )));
        }
        match strategy {
            ScoreStrategy::Baseline => {
                let mut total = 0.0;
                for (projection, histogram) in &self.pairs {
                    let z = projection.project(row).ok_or_else(|| {
                        Error::Contract(
                            "baseline LODA scoring requires fully observed rows".into(),
                        )
                    })?;
                    total += -histogram.density(z).ln();
                }
                Ok(Score::real(total / self.pairs.len() as f64))
            }
            ScoreStrategy::Reduced => {
                let mut total = 0.0;
                let mut used = 0usize;
                for (projection, histogram) in &self.pairs {
                    if let Some(z) = projection.project(row) {
                        total += -histogram.density(z).ln();
                        used += 1;
                    }
                }
                if used == 0 {
                    Ok(Score::fallback(self.neutral_score))
                } else {
                    Ok(Score::real(total / used as f64))
                }
            }
            other => Err(Error::Config(format!(
                "LODA supports baseline and reduced scoring, not {other}"
            ))),
        }
    }

    /// Score every row of a matrix (rows in parallel, deterministic output).
    pub fn score_matrix(&self, data: &MaskedMatrix, strategy: ScoreStrategy) -> Result<Vec<Score>> {
        (0..data.n_rows())
            .into_par_iter()
            .map(|i| self.score(data.row(i), strategy))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Independent bin-count search: sorted data, counts via binary search
    /// over bin membership, fresh formula evaluation.
    fn brute_force_bin_count(z: &[f64]) -> usize {
        let mut sorted = z.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = sorted[0];
        let hi = *sorted.last().unwrap();
        if lo == hi {
            return 1;
        }
        let n = sorted.len() as f64;
        let cap = br_search_cap(sorted.len());
        let mut best = (1usize, f64::NEG_INFINITY);
        for b in 1..=cap {
            let width = (hi - lo) / b as f64;
            let mut ll = 0.0;
            for bin in 0..b {
                let start = sorted.partition_point(|&v| bin_index(v, lo, width, b) < bin);
                let end = sorted.partition_point(|&v| bin_index(v, lo, width, b) <= bin);
                let c = (end - start) as f64;
                if c > 0.0 {
                    ll += c * (b as f64 * c / n).ln();
                }
            }
            let score = ll - (b as f64 - 1.0 + (b as f64).ln().powf(2.5));
            if score > best.1 {
                best = (b, score);
            }
        }
        best.0
    }

    #[test]
    fn constant_input_selects_one_bin() {
        assert_eq!(br_bin_count(&[3.0; 50]).unwrap(), 1);
    }

    #[test]
    fn bin_count_matches_brute_force_on_random_inputs() {
        let mut rng = SeededRng::new(99);
        for case in 0..100 {
            let n = rng.random_range(2..400);
            let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let got = br_bin_count(&z).unwrap();
            let want = brute_force_bin_count(&z);
            assert_eq!(got, want, "case {case} with n = {n}");
        }
    }

    #[test]
    fn separated_clusters_need_multiple_bins() {
        let mut rng = SeededRng::new(5);
        let mut z = Vec::new();
        for _ in 0..500 {
            z.push(rng.random::<f64>());
            z.push(100.0 + rng.random::<f64>());
        }
        let b = br_bin_count(&z).unwrap();
        assert!(b >= 2, "got B = {b}");
        // The single-bin penalized likelihood is exactly 0; the chosen B
        // must strictly beat it.
        let n = z.len() as f64;
        let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / b as f64;
        let mut counts = vec![0usize; b];
        for &v in &z {
            counts[bin_index(v, lo, width, b)] += 1;
        }
        let ll: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| c as f64 * (b as f64 * c as f64 / n).ln())
            .sum();
        let score = ll - (b as f64 - 1.0 + (b as f64).ln().powf(2.5));
        assert!(score > 0.0);
    }

    fn gaussian_matrix(n: usize, d: usize, seed: u64) -> MaskedMatrix {
        let mut rng = SeededRng::new(seed);
        let values: Vec<f64> = (0..n * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        MaskedMatrix::from_dense(n, d, values).unwrap()
    }

    #[test]
    fn projections_have_ceil_sqrt_d_nonzeros() {
        let data = gaussian_matrix(300, 8, 1);
        let model = fit_loda(&data, 40, &SeededRng::new(2)).unwrap();
        assert_eq!(model.pairs().len(), 40);
        for (projection, _) in model.pairs() {
            assert_eq!(projection.nonzero.len(), 3);
            let nonzeros = projection.weights.iter().filter(|w| **w != 0.0).count();
            assert_eq!(nonzeros, 3);
        }
        let wide = gaussian_matrix(120, 100, 3);
        let model = fit_loda(&wide, 5, &SeededRng::new(4)).unwrap();
        for (projection, _) in model.pairs() {
            assert_eq!(projection.nonzero.len(), 10);
        }
    }

    #[test]
    fn histograms_integrate_to_one() {
        let data = gaussian_matrix(1000, 6, 7);
        let model = fit_loda(&data, 30, &SeededRng::new(8)).unwrap();
        for (_, histogram) in model.pairs() {
            let mass: f64 = histogram
                .densities
                .iter()
                .map(|d| d * histogram.width)
                .sum();
            assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        }
    }

    #[test]
    fn unit_density_scores_zero() {
        let histogram = Histogram {
            origin: 0.0,
            width: 1.0,
            densities: vec![1.0],
            n_train: 100,
        };
        let projection = Projection {
            weights: vec![1.0],
            nonzero: vec![0],
        };
        let model = LodaModel {
            pairs: vec![(projection, histogram)],
            n_features: 1,
            neutral_score: 0.0,
        };
        let values = [0.5];
        let mask = [true];
        let row = MaskedRow {
            values: &values,
            mask: &mask,
        };
        let s = model.score(row, ScoreStrategy::Baseline).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn fully_observed_reduced_equals_baseline() {
        let data = gaussian_matrix(500, 5, 11);
        let model = fit_loda(&data, 50, &SeededRng::new(12)).unwrap();
        for i in 0..40 {
            let row = data.row(i);
            let base = model.score(row, ScoreStrategy::Baseline).unwrap();
            let red = model.score(row, ScoreStrategy::Reduced).unwrap();
            assert_eq!(base, red);
        }
    }

    #[test]
    fn all_missing_row_gets_neutral_fallback() {
        let data = gaussian_matrix(200, 4, 13);
        let model = fit_loda(&data, 20, &SeededRng::new(14)).unwrap();
        let values = vec![0.0; 4];
        let mask = vec![false; 4];
        let row = MaskedRow {
            values: &values,
            mask: &mask,
        };
        let s = model.score(row, ScoreStrategy::Reduced).unwrap();
        assert!(s.fallback);
        assert_eq!(s.value, model.neutral_score());
        assert!(matches!(
            model.score(row, ScoreStrategy::Baseline),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn applicability_follows_nonzero_columns() {
        let data = gaussian_matrix(200, 6, 15);
        let model = fit_loda(&data, 30, &SeededRng::new(16)).unwrap();
        let (first, _) = &model.pairs()[0];
        let mask: Vec<bool> = (0..6).map(|j| first.nonzero.contains(&j)).collect();
        let values = vec![0.0; 6];
        let row = MaskedRow {
            values: &values,
            mask: &mask,
        };
        for (p, _) in model.pairs() {
            let subset = p.nonzero.iter().all(|&j| mask[j]);
            assert_eq!(p.applicable(row), subset);
        }
    }

    #[test]
    fn far_outlier_scores_above_training_median() {
        let data = gaussian_matrix(800, 4, 17);
        let model = fit_loda(&data, 40, &SeededRng::new(18)).unwrap();
        let far = [1e6, -1e6, 1e6, -1e6];
        let mask = [true; 4];
        let row = MaskedRow {
            values: &far,
            mask: &mask,
        };
        // Every pair must assign the far point at most the floor density.
        for (projection, histogram) in model.pairs() {
            let z = projection.project(row).unwrap();
            assert_eq!(histogram.density(z), histogram.floor_density());
        }
        let far_score = model.score(row, ScoreStrategy::Baseline).unwrap().value;
        let typical = model
            .score(data.row(0), ScoreStrategy::Baseline)
            .unwrap()
            .value;
        assert!(far_score > typical);
        assert!(far_score.is_finite());
    }

    #[test]
    fn training_with_missing_values_fails() {
        let data = MaskedMatrix::new(
            2,
            2,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true, true, false, true],
        )
        .unwrap();
        assert!(matches!(
            fit_loda(&data, 5, &SeededRng::new(1)),
            Err(Error::UnsupportedInput(_))
        ));
    }

    #[test]
    fn scores_are_finite_everywhere() {
        let data = gaussian_matrix(300, 5, 21);
        let model = fit_loda(&data, 25, &SeededRng::new(22)).unwrap();
        let mut rng = SeededRng::new(23);
        for _ in 0..200 {
            let values: Vec<f64> = (0..5)
                .map(|_| rng.random::<f64>() * 2000.0 - 1000.0)
                .collect();
            let mask: Vec<bool> = (0..5).map(|_| rng.random::<bool>()).collect();
            let row = MaskedRow {
                values: &values,
                mask: &mask,
            };
            let s = model.score(row, ScoreStrategy::Reduced).unwrap();
            assert!(s.value.is_finite());
        }
    }
}
