//! Query-time imputation: unconditional column means and chained-equations
//! Gibbs sampling with a Bayesian ridge regression per column.
//!
//! The chained-equations imputer initializes missing cells at the column
//! means, then repeatedly sweeps the columns in ascending order. For each
//! column with missing cells it fits a ridge regression predicting that
//! column from all others on the regression corpus (training rows plus the
//! test rows where the column is observed, with current imputations filling
//! the predictors), then redraws every missing cell from the posterior
//! predictive: coefficients from `N(beta_hat, cov)`, then the value from
//! `N(x beta, sigma^2)`. After all passes each missing cell becomes the
//! mean of its post-burn-in draws; observed cells are never touched.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, MaskedRow};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::rng::SeededRng;

/// Per-column training means used by mean imputation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnStats {
    pub means: Vec<f64>,
}

impl ColumnStats {
    /// Column means over the observed cells of a matrix.
    pub fn from_matrix(data: &MaskedMatrix) -> Result<ColumnStats> {
        let mut means = vec![0.0; data.n_cols()];
        for (j, mean) in means.iter_mut().enumerate() {
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..data.n_rows() {
                if let Some(v) = data.get(i, j) {
                    total += v;
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::UnsupportedInput(format!(
                    "column {j} has no observed values to average"
                )));
            }
            *mean = total / count as f64;
        }
        Ok(ColumnStats { means })
    }
}

/// Replace each missing cell with its column mean; observed cells pass
/// through untouched.
pub fn mean_impute(stats: &ColumnStats, row: MaskedRow<'_>) -> Result<Vec<f64>> {
    if stats.means.len() != row.len() {
        return Err(Error::Config(format!(
            "stats cover {} columns, row has {}",
            stats.means.len(),
            row.len()
        )));
    }
    Ok((0..row.len())
        .map(|j| row.get(j).unwrap_or(stats.means[j]))
        .collect())
}

/// Mean-impute every row of a matrix; the result is fully observed.
pub fn mean_impute_matrix(stats: &ColumnStats, data: &MaskedMatrix) -> Result<MaskedMatrix> {
    let mut values = Vec::with_capacity(data.n_rows() * data.n_cols());
    for i in 0..data.n_rows() {
        values.extend(mean_impute(stats, data.row(i))?);
    }
    MaskedMatrix::from_dense(data.n_rows(), data.n_cols(), values)
}

/// Posterior of a Bayesian ridge regression with plug-in noise variance.
#[derive(Debug, Clone)]
pub struct RidgePosterior {
    /// Coefficient posterior mean, one entry per design column.
    pub coef_mean: Vec<f64>,
    /// Row-major coefficient posterior covariance.
    pub coef_cov: Vec<f64>,
    /// Residual variance estimate.
    pub noise_var: f64,
}

/// Ridge regression on a row-major design matrix whose first column is the
/// (unpenalized) intercept: `beta = (X^T X + lambda I)^{-1} X^T y` with a
/// zero penalty on column 0, `sigma^2 = ||y - X beta||^2 / max(1, n - p)`,
/// and coefficient covariance `sigma^2 (X^T X + lambda I)^{-1}`.
pub fn ridge_fit(
    x: &[f64],
    n_rows: usize,
    n_cols: usize,
    y: &[f64],
    lambda: f64,
) -> Result<RidgePosterior> {
    if n_rows < 2 {
        return Err(Error::Config(
            "ridge regression needs at least 2 rows".into(),
        ));
    }
    if lambda <= 0.0 {
        return Err(Error::Config("ridge lambda must be positive".into()));
    }
    if x.len() != n_rows * n_cols || y.len() != n_rows {
        return Err(Error::Config("design matrix shape mismatch".into()));
    }

    let p = n_cols;
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for (row, &target) in x.chunks_exact(p).zip(y) {
        for a in 0..p {
            let va = row[a];
            xty[a] += va * target;
            for b in 0..=a {
                xtx[a * p + b] += va * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[b * p + a] = xtx[a * p + b];
        }
    }
    // Penalize everything except the intercept column.
    for a in 1..p {
        xtx[a * p + a] += lambda;
    }

    let chol = Cholesky::decompose(&xtx, p)
        .ok_or_else(|| Error::Domain("ridge normal equations are not positive-definite".into()))?;
    let mut coef_mean = xty;
    chol.solve(&mut coef_mean);

    let mut rss = 0.0;
    for (row, &target) in x.chunks_exact(p).zip(y) {
        let pred: f64 = row.iter().zip(&coef_mean).map(|(a, b)| a * b).sum();
        rss += (target - pred) * (target - pred);
    }
    let dof = (n_rows as f64 - p as f64).max(1.0);
    let noise_var = (rss / dof).max(0.0);

    let mut coef_cov = chol.inverse();
    coef_cov.iter_mut().for_each(|v| *v *= noise_var);

    Ok(RidgePosterior {
        coef_mean,
        coef_cov,
        noise_var,
    })
}

/// Which rows feed the per-column regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiceCorpus {
    /// Training rows plus test rows (with current imputations). The default;
    /// stabilizes small query sets.
    TrainPlusTest,
    /// Test rows only.
    TestOnly,
}

impl std::fmt::Display for MiceCorpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MiceCorpus::TrainPlusTest => "train+test",
            MiceCorpus::TestOnly => "test-only",
        })
    }
}

impl std::str::FromStr for MiceCorpus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train+test" => Ok(MiceCorpus::TrainPlusTest),
            "test-only" => Ok(MiceCorpus::TestOnly),
            other => Err(Error::Config(format!(
                "unknown regression corpus {other:?} (expected train+test or test-only)"
            ))),
        }
    }
}

/// Chained-equations configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiceConfig {
    pub ridge_lambda: f64,
    pub total_passes: usize,
    pub burn_in: usize,
    pub corpus: MiceCorpus,
}

impl Default for MiceConfig {
    fn default() -> Self {
        MiceConfig {
            ridge_lambda: 0.01,
            total_passes: 110,
            burn_in: 10,
            corpus: MiceCorpus::TrainPlusTest,
        }
    }
}

impl MiceConfig {
    fn validate(&self) -> Result<()> {
        if self.ridge_lambda <= 0.0 {
            return Err(Error::Config("ridge_lambda must be positive".into()));
        }
        if self.burn_in >= self.total_passes {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below total_passes ({})",
                self.burn_in, self.total_passes
            )));
        }
        Ok(())
    }
}

/// Bookkeeping from one imputation run.
#[derive(Debug, Clone)]
pub struct MiceReport {
    /// Post-burn-in draws averaged into each missing cell.
    pub samples_per_cell: usize,
    /// Columns that fell back to a zero mean (nothing observed anywhere).
    pub fallback_columns: Vec<usize>,
}

/// Impute the test matrix against a fully observed training matrix.
pub fn mice_impute(
    test: &MaskedMatrix,
    train: &MaskedMatrix,
    cfg: &MiceConfig,
    rng: &mut SeededRng,
) -> Result<MaskedMatrix> {
    mice_impute_detailed(test, train, cfg, rng).map(|(m, _)| m)
}

pub fn mice_impute_detailed(
    test: &MaskedMatrix,
    train: &MaskedMatrix,
    cfg: &MiceConfig,
    rng: &mut SeededRng,
) -> Result<(MaskedMatrix, MiceReport)> {
    cfg.validate()?;
    if !train.is_fully_observed() {
        return Err(Error::UnsupportedInput(
            "the training matrix must be fully observed".into(),
        ));
    }
    let d = test.n_cols();
    if train.n_cols() != d {
        return Err(Error::Config(format!(
            "train has {} columns, test has {d}",
            train.n_cols()
        )));
    }
    let n_test = test.n_rows();
    let n_train = train.n_rows();

    // Initial fill: training column means, falling back to test means and
    // then to zero when nothing is observed anywhere.
    let mut fallback_columns = Vec::new();
    let mut means = vec![0.0; d];
    for (j, mean) in means.iter_mut().enumerate() {
        let (mut total, mut count) = (0.0, 0usize);
        if n_train > 0 {
            for i in 0..n_train {
                total += train.value(i, j);
            }
            count = n_train;
        } else {
            for i in 0..n_test {
                if let Some(v) = test.get(i, j) {
                    total += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            fallback_columns.push(j);
            *mean = 0.0;
        } else {
            *mean = total / count as f64;
        }
    }

    let missing_by_col: Vec<Vec<usize>> = (0..d)
        .map(|j| (0..n_test).filter(|&i| !test.is_observed(i, j)).collect())
        .collect();
    let samples_per_cell = cfg.total_passes - cfg.burn_in;
    let report = MiceReport {
        samples_per_cell,
        fallback_columns,
    };
    if missing_by_col.iter().all(|rows| rows.is_empty()) {
        return Ok((test.clone(), report));
    }

    let mut current: Vec<f64> = (0..n_test)
        .flat_map(|i| {
            (0..d)
                .map(|j| test.get(i, j).unwrap_or(means[j]))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut sums = vec![0.0f64; n_test * d];

    let use_train = cfg.corpus == MiceCorpus::TrainPlusTest && n_train > 0;
    let p = d; // intercept + (d - 1) predictors
    let mut design: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut beta = vec![0.0f64; p];
    let mut z = vec![0.0f64; p];

    for pass in 0..cfg.total_passes {
        for (j, missing_rows) in missing_by_col.iter().enumerate() {
            if missing_rows.is_empty() {
                continue;
            }
            // Regression rows: the corpus rows where column j is observed,
            // with current imputations filling the predictors.
            design.clear();
            targets.clear();
            if use_train {
                for i in 0..n_train {
                    design.push(1.0);
                    for c in 0..d {
                        if c != j {
                            design.push(train.value(i, c));
                        }
                    }
                    targets.push(train.value(i, j));
                }
            }
            for i in 0..n_test {
                if test.is_observed(i, j) {
                    design.push(1.0);
                    for c in 0..d {
                        if c != j {
                            design.push(current[i * d + c]);
                        }
                    }
                    targets.push(test.value(i, j));
                }
            }

            if targets.len() < 2 {
                // Not enough evidence to regress on; keep the current value
                // as this pass's draw.
                if pass >= cfg.burn_in {
                    for &i in missing_rows {
                        sums[i * d + j] += current[i * d + j];
                    }
                }
                continue;
            }

            let posterior = ridge_fit(&design, targets.len(), p, &targets, cfg.ridge_lambda)?;
            let coef_chol = Cholesky::decompose(&posterior.coef_cov, p);
            let sigma = posterior.noise_var.sqrt();

            for &i in missing_rows {
                // Fresh coefficient draw per cell.
                match &coef_chol {
                    Some(chol) => {
                        for v in z.iter_mut() {
                            *v = StandardNormal.sample(rng);
                        }
                        chol.lower_times(&z, &mut beta);
                        for (b, m) in beta.iter_mut().zip(&posterior.coef_mean) {
                            *b += m;
                        }
                    }
                    None => beta.copy_from_slice(&posterior.coef_mean),
                }
                let mut pred = beta[0];
                let mut slot = 1;
                for c in 0..d {
                    if c != j {
                        pred += beta[slot] * current[i * d + c];
                        slot += 1;
                    }
                }
                let noise: f64 = StandardNormal.sample(rng);
                let value = pred + sigma * noise;
                current[i * d + j] = value;
                if pass >= cfg.burn_in {
                    sums[i * d + j] += value;
                }
            }
        }
    }

    let mut values = current;
    for (j, rows) in missing_by_col.iter().enumerate() {
        for &i in rows {
            values[i * d + j] = sums[i * d + j] / samples_per_cell as f64;
        }
    }
    let imputed = MaskedMatrix::from_dense(n_test, d, values)?;
    Ok((imputed, report))
}
