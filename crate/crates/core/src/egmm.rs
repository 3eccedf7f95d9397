//! Ensemble of Gaussian mixture models.
//!
//! For each component count `k` in a small grid, `reps_per_k` mixtures are
//! fitted by EM to bootstrap resamples of the training data. Component
//! counts whose mean out-of-bag log-likelihood falls more than 15% below
//! the best count are discarded; the surviving models form the ensemble.
//! The anomaly score of a query is the mean of `-log p` over the retained
//! models, where `p` is either the full density (baseline) or the density
//! of the observed coordinates with the missing ones integrated out
//! (marginal) — Gaussian marginals are just coordinate sub-vectors and
//! sub-matrices, so marginalization is exact and cheap.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, MaskedRow};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::rng::SeededRng;
use crate::{Score, ScoreStrategy};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Covariance ridge: `1e-6 * trace(pooled) / d` is added to every diagonal
/// each M-step.
const COV_REG_DELTA: f64 = 1e-6;

/// Per-row log-likelihood improvement below which EM stops.
const EM_TOLERANCE: f64 = 1e-6;

const EM_MAX_ITERATIONS: usize = 200;

/// Cap on `-log p` so degenerate underflows stay finite in outputs.
pub const MAX_NEG_LOG_DENSITY: f64 = 1e9;

/// One mixture component: weight, mean, and a full covariance matrix
/// (row-major `d x d`, symmetric positive-definite after regularization).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

/// A Gaussian mixture model over `d` features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Gmm {
    components: Vec<GaussianComponent>,
    n_features: usize,
}

impl Gmm {
    pub fn new(components: Vec<GaussianComponent>, n_features: usize) -> Result<Gmm> {
        if components.is_empty() {
            return Err(Error::Config(
                "a mixture needs at least one component".into(),
            ));
        }
        for c in &components {
            if c.mean.len() != n_features || c.cov.len() != n_features * n_features {
                return Err(Error::Config("component dimensions disagree".into()));
            }
            if !(c.weight > 0.0) {
                return Err(Error::Config("component weights must be positive".into()));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(Gmm {
            components,
            n_features,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// The mixture restricted to a subset of coordinates.
    pub fn marginalize(&self, cols: &[usize]) -> Result<Gmm> {
        if cols.is_empty() {
            return Err(Error::Domain(
                "cannot marginalize away every coordinate".into(),
            ));
        }
        if cols.iter().any(|&j| j >= self.n_features) {
            return Err(Error::Config("marginal column index out of range".into()));
        }
        let d = self.n_features;
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent {
                weight: c.weight,
                mean: cols.iter().map(|&j| c.mean[j]).collect(),
                cov: cols
                    .iter()
                    .flat_map(|&i| cols.iter().map(move |&j| c.cov[i * d + j]))
                    .collect(),
            })
            .collect();
        Gmm::new(components, cols.len())
    }

    fn prepare(&self, cols: &[usize]) -> Result<PreparedGmm> {
        let m = cols.len();
        let mut comps = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let mean: Vec<f64> = cols.iter().map(|&j| c.mean[j]).collect();
            let cov: Vec<f64> = cols
                .iter()
                .flat_map(|&i| cols.iter().map(move |&j| c.cov[i * self.n_features + j]))
                .collect();
            let chol = Cholesky::decompose(&cov, m).ok_or_else(|| {
                Error::Domain("component covariance is not positive-definite".into())
            })?;
            let log_const = c.weight.ln() - 0.5 * (m as f64 * LN_2PI + chol.log_det());
            comps.push(PreparedComponent {
                mean,
                chol,
                log_const,
            });
        }
        Ok(PreparedGmm {
            cols: cols.to_vec(),
            comps,
        })
    }
}

struct PreparedComponent {
    mean: Vec<f64>,
    chol: Cholesky,
    /// `ln(weight) - (m ln 2pi + ln det) / 2`; subtracting half the
    /// quadratic form yields the component's weighted log density.
    log_const: f64,
}

/// A mixture specialized to one observedness pattern, with per-component
/// Cholesky factors ready for repeated evaluation.
struct PreparedGmm {
    cols: Vec<usize>,
    comps: Vec<PreparedComponent>,
}

impl PreparedGmm {
    /// Log density over the pattern's coordinates, via log-sum-exp.
    /// `diff` and `scratch` are caller-provided buffers of the pattern size.
    fn log_density(&self, row: MaskedRow<'_>, diff: &mut [f64], scratch: &mut [f64]) -> f64 {
        let mut terms = vec![0.0f64; self.comps.len()];
        for (t, comp) in terms.iter_mut().zip(&self.comps) {
            for (slot, (&j, m)) in diff.iter_mut().zip(self.cols.iter().zip(&comp.mean)) {
                *slot = row.values[j] - m;
            }
            let quad = comp.chol.quad_form(diff, scratch);
            *t = comp.log_const - 0.5 * quad;
        }
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Log density of a fully observed row under the mixture.
pub fn log_density(gmm: &Gmm, x: &[f64]) -> Result<f64> {
    if x.len() != gmm.n_features {
        return Err(Error::Config("query dimension mismatch".into()));
    }
    let cols: Vec<usize> = (0..gmm.n_features).collect();
    let prepared = gmm.prepare(&cols)?;
    let mask = vec![true; x.len()];
    let row = MaskedRow {
        values: x,
        mask: &mask,
    };
    let mut diff = vec![0.0; x.len()];
    let mut scratch = vec![0.0; x.len()];
    Ok(prepared.log_density(row, &mut diff, &mut scratch))
}

/// Log density of the observed coordinates with missing ones integrated
/// out. Errors when the row has no observed coordinate.
pub fn marginal_log_density(gmm: &Gmm, row: MaskedRow<'_>) -> Result<f64> {
    if row.len() != gmm.n_features {
        return Err(Error::Config("query dimension mismatch".into()));
    }
    let cols = row.observed_indices();
    if cols.is_empty() {
        return Err(Error::Domain(
            "marginal density needs at least one observed coordinate".into(),
        ));
    }
    let prepared = gmm.prepare(&cols)?;
    let mut diff = vec![0.0; cols.len()];
    let mut scratch = vec![0.0; cols.len()];
    Ok(prepared.log_density(row, &mut diff, &mut scratch))
}

/// Diagnostics from one EM fit.
#[derive(Debug, Clone)]
pub struct GmmFitInfo {
    /// Mean per-row log-likelihood, one entry per E-step.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub reseeded_components: usize,
    pub dropped_components: usize,
}

/// Fit a `k`-component mixture by EM with k-means++-style seeding.
pub fn fit_gmm(data: &MaskedMatrix, k: usize, rng: &mut SeededRng) -> Result<Gmm> {
    fit_gmm_detailed(data, k, rng).map(|(gmm, _)| gmm)
}

pub fn fit_gmm_detailed(
    data: &MaskedMatrix,
    k: usize,
    rng: &mut SeededRng,
) -> Result<(Gmm, GmmFitInfo)> {
    if !data.is_fully_observed() {
        return Err(Error::UnsupportedInput(
            "training data contains missing values; mixtures train on complete data".into(),
        ));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if data.n_rows() < k {
        return Err(Error::Config(format!(
            "cannot fit {k} components to {} rows",
            data.n_rows()
        )));
    }

    let n = data.n_rows();
    let d = data.n_cols();
    let x = data.dense_values();

    // Pooled (global) covariance sets the regularization scale and the
    // covariance of re-seeded components.
    let mut global_mean = vec![0.0; d];
    for row in x.chunks_exact(d) {
        for (m, v) in global_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    global_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut pooled = vec![0.0; d * d];
    for row in x.chunks_exact(d) {
        for i in 0..d {
            let di = row[i] - global_mean[i];
            for j in 0..=i {
                pooled[i * d + j] += di * (row[j] - global_mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            pooled[i * d + j] /= n as f64;
            pooled[j * d + i] = pooled[i * d + j];
        }
    }
    let trace: f64 = (0..d).map(|i| pooled[i * d + i]).sum();
    let reg = COV_REG_DELTA * (trace / d as f64).max(f64::MIN_POSITIVE);

    let mut state = EmState {
        n,
        d,
        k,
        x,
        pooled,
        reg,
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
        weights: vec![1.0 / k as f64; k],
        reseeded: vec![false; k],
        alive: (0..k).collect(),
        info: GmmFitInfo {
            log_likelihood_trace: Vec::new(),
            iterations: 0,
            reseeded_components: 0,
            dropped_components: 0,
        },
    };
    state.seed_means(rng);
    for _ in 0..k {
        let mut cov = state.pooled.clone();
        state.add_reg(&mut cov);
        state.covs.push(cov);
    }

    state.run(rng)?;

    let EmState {
        alive,
        means,
        covs,
        weights,
        info,
        ..
    } = state;
    let mut components: Vec<GaussianComponent> = alive
        .iter()
        .map(|&c| GaussianComponent {
            weight: weights[c],
            mean: means[c].clone(),
            cov: covs[c].clone(),
        })
        .collect();
    // Renormalize exactly against accumulated rounding.
    let total: f64 = components.iter().map(|c| c.weight).sum();
    components.iter_mut().for_each(|c| c.weight /= total);
    Ok((Gmm::new(components, d)?, info))
}

struct EmState<'a> {
    n: usize,
    d: usize,
    k: usize,
    x: &'a [f64],
    pooled: Vec<f64>,
    reg: f64,
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<f64>>,
    weights: Vec<f64>,
    reseeded: Vec<bool>,
    alive: Vec<usize>,
    info: GmmFitInfo,
}

impl<'a> EmState<'a> {
    fn add_reg(&self, cov: &mut [f64]) {
        for i in 0..self.d {
            cov[i * self.d + i] += self.reg;
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// k-means++-style seeding: each new mean is a data row drawn with
    /// probability proportional to its squared distance from the seeds
    /// chosen so far.
    fn seed_means(&mut self, rng: &mut SeededRng) {
        let sq_dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        let first = rng.random_range(0..self.n);
        self.means.push(self.row(first).to_vec());
        let mut min_sq: Vec<f64> = (0..self.n)
            .map(|i| sq_dist(self.row(i), &self.means[0]))
            .collect();
        while self.means.len() < self.k {
            let total: f64 = min_sq.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = self.n - 1;
                for (i, &w) in min_sq.iter().enumerate() {
                    target -= w;
                    if target <= 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                rng.random_range(0..self.n)
            };
            let seed_row = self.row(pick).to_vec();
            for i in 0..self.n {
                let dist = sq_dist(self.row(i), &seed_row);
                if dist < min_sq[i] {
                    min_sq[i] = dist;
                }
            }
            self.means.push(seed_row);
        }
    }

    fn run(&mut self, rng: &mut SeededRng) -> Result<()> {
        let (n, d, k) = (self.n, self.d, self.k);
        let mut resp = vec![0.0f64; n * k];
        let mut diff = vec![0.0f64; d];
        let mut scratch = vec![0.0f64; d];

        for iteration in 0..EM_MAX_ITERATIONS {
            self.info.iterations = iteration + 1;

            // Decompose covariances; failures mark degenerate components.
            let mut chols: Vec<Cholesky> = Vec::with_capacity(self.alive.len());
            let mut bad: Vec<usize> = Vec::new();
            for &c in &self.alive {
                match Cholesky::decompose(&self.covs[c], d) {
                    Some(chol) => chols.push(chol),
                    None => bad.push(c),
                }
            }
            if !bad.is_empty() {
                self.handle_degenerate(&bad, rng)?;
                continue;
            }
            let log_consts: Vec<f64> = self
                .alive
                .iter()
                .zip(&chols)
                .map(|(&c, chol)| {
                    self.weights[c].ln() - 0.5 * (d as f64 * LN_2PI + chol.log_det())
                })
                .collect();

            // E-step: responsibilities and the mean per-row log-likelihood.
            let ka = self.alive.len();
            let mut total_ll = 0.0;
            for i in 0..n {
                let row = &self.x[i * d..(i + 1) * d];
                let terms = &mut resp[i * k..i * k + ka];
                for (idx, slot) in terms.iter_mut().enumerate() {
                    let mean = &self.means[self.alive[idx]];
                    for (dst, (v, m)) in diff.iter_mut().zip(row.iter().zip(mean)) {
                        *dst = v - m;
                    }
                    let quad = chols[idx].quad_form(&diff, &mut scratch);
                    *slot = log_consts[idx] - 0.5 * quad;
                }
                let ll = log_sum_exp(terms);
                total_ll += ll;
                for t in terms.iter_mut() {
                    *t = (*t - ll).exp();
                }
            }
            let mean_ll = total_ll / n as f64;
            if !mean_ll.is_finite() {
                return Err(Error::Domain("EM log-likelihood became non-finite".into()));
            }
            let converged = self
                .info
                .log_likelihood_trace
                .last()
                .is_some_and(|prev| (mean_ll - prev).abs() < EM_TOLERANCE);
            self.info.log_likelihood_trace.push(mean_ll);
            if converged {
                break;
            }

            // M-step.
            let mut totals = vec![0.0f64; ka];
            for i in 0..n {
                for (a, t) in totals.iter_mut().zip(&resp[i * k..i * k + ka]) {
                    *a += t;
                }
            }
            let starved: Vec<usize> = self
                .alive
                .iter()
                .zip(&totals)
                .filter(|(_, &t)| t < 1e-8)
                .map(|(&c, _)| c)
                .collect();
            if !starved.is_empty() {
                self.handle_degenerate(&starved, rng)?;
                continue;
            }
            let alive = self.alive.clone();
            for (idx, &c) in alive.iter().enumerate() {
                let nk = totals[idx];
                self.weights[c] = nk / n as f64;
                let mean = &mut self.means[c];
                mean.iter_mut().for_each(|m| *m = 0.0);
                for i in 0..n {
                    let r = resp[i * k + idx];
                    for (m, v) in mean.iter_mut().zip(&self.x[i * d..(i + 1) * d]) {
                        *m += r * v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= nk);
                let mean = self.means[c].clone();
                let cov = &mut self.covs[c];
                cov.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    let r = resp[i * k + idx];
                    let row = &self.x[i * d..(i + 1) * d];
                    for a in 0..d {
                        let da = r * (row[a] - mean[a]);
                        for b in 0..=a {
                            cov[a * d + b] += da * (row[b] - mean[b]);
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..=a {
                        cov[a * d + b] /= nk;
                        cov[b * d + a] = cov[a * d + b];
                    }
                }
                for a in 0..d {
                    cov[a * d + a] += self.reg;
                }
            }
            let wsum: f64 = self.alive.iter().map(|&c| self.weights[c]).sum();
            for &c in &self.alive {
                self.weights[c] /= wsum;
            }
        }
        Ok(())
    }

    /// Re-seed each degenerate component once (fresh random mean, pooled
    /// covariance); a component that degenerates again is dropped and the
    /// remaining weights renormalized.
    fn handle_degenerate(&mut self, bad: &[usize], rng: &mut SeededRng) -> Result<()> {
        for &c in bad {
            if self.reseeded[c] {
                self.alive.retain(|&a| a != c);
                self.info.dropped_components += 1;
            } else {
                self.reseeded[c] = true;
                self.info.reseeded_components += 1;
                let pick = rng.random_range(0..self.n);
                self.means[c] = self.row(pick).to_vec();
                let mut cov = self.pooled.clone();
                self.add_reg(&mut cov);
                self.covs[c] = cov;
                self.weights[c] = 1.0 / self.k as f64;
            }
        }
        if self.alive.is_empty() {
            return Err(Error::Domain(
                "every mixture component degenerated during EM".into(),
            ));
        }
        let wsum: f64 = self.alive.iter().map(|&c| self.weights[c]).sum();
        if wsum <= 0.0 {
            let uniform = 1.0 / self.alive.len() as f64;
            for &c in &self.alive {
                self.weights[c] = uniform;
            }
        } else {
            for &c in &self.alive {
                self.weights[c] /= wsum;
            }
        }
        Ok(())
    }
}

/// Component-count grid and bootstrap replication count for the ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgmmFitOptions {
    pub ks: Vec<usize>,
    pub reps_per_k: usize,
}

impl Default for EgmmFitOptions {
    fn default() -> Self {
        EgmmFitOptions {
            ks: vec![3, 4, 5],
            reps_per_k: 15,
        }
    }
}

/// The retained mixture ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgmmModel {
    models: Vec<Gmm>,
    kept_ks: Vec<usize>,
    n_features: usize,
    /// Mean training score; the fallback for rows with no observed values.
    neutral_score: f64,
}

/// What happened during ensemble fitting and model selection.
#[derive(Debug, Clone)]
pub struct EgmmFitReport {
    pub models_fitted: usize,
    /// Mean out-of-bag per-row log-likelihood per component count.
    pub per_k_oob: Vec<(usize, f64)>,
    pub kept_ks: Vec<usize>,
}

/// Component counts whose mean out-of-bag log-likelihood is within 15% of
/// the best count's. Stated so it also covers negative scores: keep `k` iff
/// `score_k >= best - 0.15 * |best|`, which reduces to `>= 0.85 * best` for
/// positive scores.
pub fn select_ks(per_k_scores: &[(usize, f64)]) -> Vec<usize> {
    let best = per_k_scores
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = best - 0.15 * best.abs();
    per_k_scores
        .iter()
        .filter(|&&(_, s)| s >= threshold)
        .map(|&(k, _)| k)
        .collect()
}

/// Fit the ensemble: `reps_per_k` bootstrap EM fits per component count,
/// out-of-bag scoring, and the 15% selection rule. The best count always
/// survives, so the ensemble is never empty.
pub fn fit_egmm(data: &MaskedMatrix, opts: &EgmmFitOptions, rng: &SeededRng) -> Result<EgmmModel> {
    fit_egmm_detailed(data, opts, rng).map(|(model, _)| model)
}

pub fn fit_egmm_detailed(
    data: &MaskedMatrix,
    opts: &EgmmFitOptions,
    rng: &SeededRng,
) -> Result<(EgmmModel, EgmmFitReport)> {
    if !data.is_fully_observed() {
        return Err(Error::UnsupportedInput(
            "training data contains missing values; mixtures train on complete data".into(),
        ));
    }
    if opts.ks.is_empty() || opts.reps_per_k == 0 {
        return Err(Error::Config(
            "need at least one component count and one replicate".into(),
        ));
    }
    let n = data.n_rows();
    if let Some(&kmax) = opts.ks.iter().max() {
        if n < kmax {
            return Err(Error::Config(format!(
                "cannot fit {kmax} components to {n} rows"
            )));
        }
    }

    struct BootFit {
        k: usize,
        gmm: Gmm,
        oob_ll: Option<f64>,
    }

    let jobs: Vec<(usize, usize)> = opts
        .ks
        .iter()
        .flat_map(|&k| (0..opts.reps_per_k).map(move |r| (k, r)))
        .collect();
    let fits: Vec<BootFit> = jobs
        .par_iter()
        .map(|&(k, r)| -> Result<BootFit> {
            let mut job_rng = rng.fork(&[k as u64, r as u64]);
            let d = data.n_cols();
            // Bootstrap resample; retry once if no row is left out.
            let mut drawn = vec![false; n];
            let mut indices = vec![0usize; n];
            let mut oob: Vec<usize> = Vec::new();
            for attempt in 0..2 {
                drawn.iter_mut().for_each(|d| *d = false);
                for slot in indices.iter_mut() {
                    let i = job_rng.random_range(0..n);
                    *slot = i;
                    drawn[i] = true;
                }
                oob = (0..n).filter(|&i| !drawn[i]).collect();
                if !oob.is_empty() || attempt == 1 {
                    break;
                }
            }
            let mut values = Vec::with_capacity(n * d);
            for &i in &indices {
                values.extend_from_slice(&data.dense_values()[i * d..(i + 1) * d]);
            }
            let sample = MaskedMatrix::from_dense(n, d, values)?;
            let gmm = fit_gmm(&sample, k, &mut job_rng)?;
            let oob_ll = if oob.is_empty() {
                None
            } else {
                let cols: Vec<usize> = (0..d).collect();
                let prepared = gmm.prepare(&cols)?;
                let mut diff = vec![0.0; d];
                let mut scratch = vec![0.0; d];
                let total: f64 = oob
                    .iter()
                    .map(|&i| prepared.log_density(data.row(i), &mut diff, &mut scratch))
                    .sum();
                Some(total / oob.len() as f64)
            };
            Ok(BootFit { k, gmm, oob_ll })
        })
        .collect::<Result<_>>()?;

    let mut per_k_oob: Vec<(usize, f64)> = Vec::new();
    for &k in &opts.ks {
        let lls: Vec<f64> = fits
            .iter()
            .filter_map(|f| if f.k == k { f.oob_ll } else { None })
            .collect();
        if !lls.is_empty() {
            per_k_oob.push((k, lls.iter().sum::<f64>() / lls.len() as f64));
        }
    }
    if per_k_oob.is_empty() {
        return Err(Error::Domain(
            "no bootstrap replicate produced an out-of-bag estimate".into(),
        ));
    }
    let kept_ks = select_ks(&per_k_oob);
    let models_fitted = fits.len();
    let models: Vec<Gmm> = fits
        .into_iter()
        .filter(|f| kept_ks.contains(&f.k))
        .map(|f| f.gmm)
        .collect();

    let mut model = EgmmModel {
        models,
        kept_ks: kept_ks.clone(),
        n_features: data.n_cols(),
        neutral_score: 0.0,
    };
    let train_scores = model.score_matrix(data, ScoreStrategy::Baseline)?;
    model.neutral_score =
        train_scores.iter().map(|s| s.value).sum::<f64>() / train_scores.len().max(1) as f64;

    let report = EgmmFitReport {
        models_fitted,
        per_k_oob,
        kept_ks,
    };
    Ok((model, report))
}

impl EgmmModel {
    pub fn models(&self) -> &[Gmm] {
        &self.models
    }

    pub fn kept_ks(&self) -> &[usize] {
        &self.kept_ks
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn neutral_score(&self) -> f64 {
        self.neutral_score
    }

    /// Mean of `-log p` over retained models; `Baseline` uses the full
    /// density (fully observed rows only), `Marginal` integrates missing
    /// coordinates out. A row with no observed coordinate is an error here;
    /// batch scoring maps it to the flagged neutral constant instead.
    pub fn score(&self, row: MaskedRow<'_>, strategy: ScoreStrategy) -> Result<f64> {
        match strategy {
            ScoreStrategy::Baseline => {
                if !row.is_fully_observed() {
                    return Err(Error::Contract(
                        "baseline EGMM scoring requires fully observed rows".into(),
                    ));
                }
            }
            ScoreStrategy::Marginal => {}
            other => {
                return Err(Error::Config(format!(
                    "EGMM supports baseline and marginal scoring, not {other}"
                )))
            }
        }
        let total: f64 = self
            .models
            .iter()
            .map(|gmm| match strategy {
                ScoreStrategy::Baseline => log_density(gmm, row.values),
                _ => marginal_log_density(gmm, row),
            })
            .map(|ll| ll.map(|v| (-v).min(MAX_NEG_LOG_DENSITY)))
            .sum::<Result<f64>>()?;
        Ok(total / self.models.len() as f64)
    }

    /// Score every row of a matrix. Observedness patterns are prepared once
    /// and shared across rows, so mixed missingness stays cheap. Under the
    /// marginal strategy a row with no observed coordinate receives the
    /// flagged neutral score.
    pub fn score_matrix(&self, data: &MaskedMatrix, strategy: ScoreStrategy) -> Result<Vec<Score>> {
        match strategy {
            ScoreStrategy::Baseline | ScoreStrategy::Marginal => {}
            other => {
                return Err(Error::Config(format!(
                    "EGMM supports baseline and marginal scoring, not {other}"
                )))
            }
        }
        let mut patterns: BTreeMap<Vec<usize>, Vec<PreparedGmm>> = BTreeMap::new();
        for i in 0..data.n_rows() {
            let row = data.row(i);
            if strategy == ScoreStrategy::Baseline && !row.is_fully_observed() {
                return Err(Error::Contract(
                    "baseline EGMM scoring requires fully observed rows".into(),
                ));
            }
            let cols = row.observed_indices();
            if cols.is_empty() {
                continue;
            }
            patterns.entry(cols).or_default();
        }
        let prepared: Vec<(Vec<usize>, Vec<PreparedGmm>)> = patterns
            .into_keys()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|cols| -> Result<_> {
                let per_model = self
                    .models
                    .iter()
                    .map(|g| g.prepare(&cols))
                    .collect::<Result<Vec<_>>>()?;
                Ok((cols, per_model))
            })
            .collect::<Result<_>>()?;
        let by_pattern: BTreeMap<&[usize], &Vec<PreparedGmm>> = prepared
            .iter()
            .map(|(cols, p)| (cols.as_slice(), p))
            .collect();

        (0..data.n_rows())
            .into_par_iter()
            .map(|i| {
                let row = data.row(i);
                let cols = row.observed_indices();
                if cols.is_empty() {
                    return Ok(Score::fallback(self.neutral_score));
                }
                let prepared = by_pattern[cols.as_slice()];
                let mut diff = vec![0.0; cols.len()];
                let mut scratch = vec![0.0; cols.len()];
                let total: f64 = prepared
                    .iter()
                    .map(|p| {
                        (-p.log_density(row, &mut diff, &mut scratch)).min(MAX_NEG_LOG_DENSITY)
                    })
                    .sum();
                Ok(Score::real(total / prepared.len() as f64))
            })
            .collect()
    }
}

/// Monte-Carlo tail probability with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct TailProbability {
    pub estimate: f64,
    pub std_error: f64,
}

/// Fraction of mixture mass lying at or below the query's density: draw
/// `n_samples` points from the mixture (marginalized to the query's
/// observed coordinates when it has missing values) and count how many have
/// density no larger than the query's. Unlike raw densities, these
/// probabilities are comparable across different missingness patterns.
pub fn tail_probability(
    gmm: &Gmm,
    row: MaskedRow<'_>,
    n_samples: usize,
    rng: &mut SeededRng,
) -> Result<TailProbability> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    if row.len() != gmm.n_features() {
        return Err(Error::Config("query dimension mismatch".into()));
    }
    let cols = row.observed_indices();
    if cols.is_empty() {
        return Err(Error::Domain(
            "tail probability needs at least one observed coordinate".into(),
        ));
    }
    let marginal = gmm.marginalize(&cols)?;
    let m = cols.len();
    let all: Vec<usize> = (0..m).collect();
    let prepared = marginal.prepare(&all)?;
    let query: Vec<f64> = cols.iter().map(|&j| row.values[j]).collect();
    let mask = vec![true; m];
    let mut diff = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let query_log_density = prepared.log_density(
        MaskedRow {
            values: &query,
            mask: &mask,
        },
        &mut diff,
        &mut scratch,
    );

    // Component choice by cumulative weight, offsets via Cholesky factors.
    let weights: Vec<f64> = marginal.components().iter().map(|c| c.weight).collect();
    let mut sample = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let mut target = rng.random::<f64>();
        let mut chosen = marginal.k() - 1;
        for (idx, &w) in weights.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = idx;
                break;
            }
        }
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        prepared.comps[chosen].chol.lower_times(&z, &mut sample);
        for (s, mu) in sample.iter_mut().zip(&prepared.comps[chosen].mean) {
            *s += mu;
        }
        let ld = prepared.log_density(
            MaskedRow {
                values: &sample,
                mask: &mask,
            },
            &mut diff,
            &mut scratch,
        );
        if ld <= query_log_density {
            hits += 1;
        }
    }
    let estimate = hits as f64 / n_samples as f64;
    let std_error = (estimate * (1.0 - estimate) / n_samples as f64).sqrt();
    Ok(TailProbability {
        estimate,
        std_error,
    })
}
