//! Isolation Forest with missing-value-aware scoring.
//!
//! Trees split on `x_j >= theta` with `theta` drawn uniformly from the open
//! range of the node's data, and growth continues until every point is
//! isolated or all usable columns are constant. A query that tests a missing
//! feature can be handled two ways: proportional distribution (descend both
//! children and combine by the training split fractions) or a reduced
//! ensemble (each tree restricted to a random feature subset; only trees
//! whose features are all observed participate).

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedMatrix, MaskedRow};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::{Score, ScoreStrategy};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Score given to every row when no reduced tree applies; with tie-aware
/// AUC an all-fallback query set evaluates to exactly 0.5.
pub const NEUTRAL_SCORE: f64 = 0.5;

/// Expected isolation depth of a uniformly random point among `n` samples:
/// `c(n) = 2 H(n-1) - 2 (n-1)/n` with `H(i) = ln(i) + gamma` for `i >= 1`
/// and `H(0) = 0`, so `c(1) = 0`. Also used as the depth credit for leaves
/// holding more than one (indistinguishable) training point.
pub fn expected_depth(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("expected_depth requires n >= 1".into()));
    }
    Ok(c_factor(n))
}

fn c_factor(n: usize) -> f64 {
    debug_assert!(n >= 1);
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
}

/// One node of an isolation tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Number of training rows that ended here.
        size: usize,
        /// Depth of this node (root = 0).
        depth: usize,
    },
    Internal {
        /// Column tested by this node.
        feature: usize,
        /// Split threshold; the left child holds rows with `x_j >= threshold`.
        threshold: f64,
        /// Minimum of the node's training data on `feature`.
        lo: f64,
        /// Maximum of the node's training data on `feature`.
        hi: f64,
        /// Fraction of the node's training rows with `x_j >= threshold`.
        p_left: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// A fitted ensemble of isolation trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<TreeNode>,
    /// Per-tree usable columns, sorted. The full column set unless the
    /// forest was fitted with `reduced = true`.
    feature_sets: Vec<Vec<usize>>,
    subsample_size: usize,
    /// Normalizer `z = expected_depth(subsample_size)`.
    normalizer: f64,
    n_features: usize,
    reduced: bool,
}

/// Reduced ensembles restrict each tree to `ceil(sqrt(d))` columns.
pub fn reduced_feature_count(d: usize) -> usize {
    (d as f64).sqrt().ceil() as usize
}

/// Grow `n_trees` isolation trees, each on a uniform without-replacement
/// subsample of `min(subsample, n_rows)` rows. With `reduced`, each tree
/// first draws `ceil(sqrt(d))` distinct columns and splits only on those.
pub fn fit_iforest(
    data: &MaskedMatrix,
    n_trees: usize,
    subsample: usize,
    reduced: bool,
    rng: &SeededRng,
) -> Result<IsolationForest> {
    if !data.is_fully_observed() {
        return Err(Error::UnsupportedInput(
            "training data contains missing values; isolation forests train on complete data"
                .into(),
        ));
    }
    if subsample < 2 {
        return Err(Error::Config("subsample must be at least 2".into()));
    }
    if n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    if data.n_rows() < 2 {
        return Err(Error::Config("need at least 2 training rows".into()));
    }

    let d = data.n_cols();
    let eff_subsample = subsample.min(data.n_rows());
    let k = reduced_feature_count(d);

    let grown: Vec<(TreeNode, Vec<usize>)> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = rng.fork(&[t as u64]);
            let feature_set: Vec<usize> = if reduced {
                let mut cols = index::sample(&mut tree_rng, d, k.min(d)).into_vec();
                cols.sort_unstable();
                cols
            } else {
                (0..d).collect()
            };
            let mut rows = index::sample(&mut tree_rng, data.n_rows(), eff_subsample).into_vec();
            let tree = grow(data, &mut rows, 0, &feature_set, &mut tree_rng);
            (tree, feature_set)
        })
        .collect();

    let (trees, feature_sets) = grown.into_iter().unzip();
    Ok(IsolationForest {
        trees,
        feature_sets,
        subsample_size: eff_subsample,
        normalizer: c_factor(eff_subsample),
        n_features: d,
        reduced,
    })
}

fn grow(
    data: &MaskedMatrix,
    rows: &mut [usize],
    depth: usize,
    feature_set: &[usize],
    rng: &mut SeededRng,
) -> TreeNode {
    if rows.len() <= 1 {
        return TreeNode::Leaf {
            size: rows.len(),
            depth,
        };
    }

    // Columns where the node's data still varies; constant columns cannot
    // split and are excluded from the draw.
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for &j in feature_set {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in rows.iter() {
            let v = data.value(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo < hi {
            candidates.push((j, lo, hi));
        }
    }
    if candidates.is_empty() {
        return TreeNode::Leaf {
            size: rows.len(),
            depth,
        };
    }

    let (feature, lo, hi) = candidates[rng.random_range(0..candidates.len())];
    let threshold = rng.open_range(lo, hi);

    // In-place partition: left block holds rows with x_j >= threshold.
    let mut split = 0;
    for i in 0..rows.len() {
        if data.value(rows[i], feature) >= threshold {
            rows.swap(i, split);
            split += 1;
        }
    }
    debug_assert!(split > 0 && split < rows.len());
    let p_left = split as f64 / rows.len() as f64;
    let (left_rows, right_rows) = rows.split_at_mut(split);

    TreeNode::Internal {
        feature,
        threshold,
        lo,
        hi,
        p_left,
        left: Box::new(grow(data, left_rows, depth + 1, feature_set, rng)),
        right: Box::new(grow(data, right_rows, depth + 1, feature_set, rng)),
    }
}

/// Isolation depth of a query in one tree, measured from `tree` (so a call
/// on the root yields the absolute depth).
///
/// Leaves credit unresolved points with `expected_depth(size)`. An internal
/// node whose observed feature falls outside the training range `[lo, hi]`
/// isolates the query immediately. A missing tested feature is an error
/// under `Baseline`; under `Proportional` the query descends both children
/// and the node returns `1 + p_left * d_left + p_right * d_right`.
pub fn isolation_depth(tree: &TreeNode, row: MaskedRow<'_>, strategy: ScoreStrategy) -> Result<f64> {
    match tree {
        TreeNode::Leaf { size, .. } => Ok(if *size <= 1 { 0.0 } else { c_factor(*size) }),
        TreeNode::Internal {
            feature,
            threshold,
            lo,
            hi,
            p_left,
            left,
            right,
        } => match row.get(*feature) {
            Some(v) => {
                if v < *lo || v > *hi {
                    Ok(0.0)
                } else if v >= *threshold {
                    Ok(1.0 + isolation_depth(left, row, strategy)?)
                } else {
                    Ok(1.0 + isolation_depth(right, row, strategy)?)
                }
            }
            None => match strategy {
                ScoreStrategy::Proportional => {
                    let d_left = isolation_depth(left, row, strategy)?;
                    let d_right = isolation_depth(right, row, strategy)?;
                    Ok(1.0 + p_left * d_left + (1.0 - p_left) * d_right)
                }
                _ => Err(Error::Contract(format!(
                    "feature {feature} is missing; {strategy} routing requires observed values"
                ))),
            },
        },
    }
}

impl IsolationForest {
    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn feature_sets(&self) -> &[Vec<usize>] {
        &self.feature_sets
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    /// Anomaly score of one query row.
    ///
    /// `Baseline`/`Proportional`: `exp(-mean_depth / z)` over all trees.
    /// `Reduced`: the mean of per-tree scores `exp(-depth_t / z)` over the
    /// trees whose feature set is fully observed in the row; when no tree
    /// applies the result is the flagged neutral constant.
    pub fn score(&self, row: MaskedRow<'_>, strategy: ScoreStrategy) -> Result<Score> {
        if row.len() != self.n_features {
            return Err(Error::Config(format!(
                "query has {} features, forest was fitted on {}",
                row.len(),
                self.n_features
            )));
        }
        match strategy {
            ScoreStrategy::Baseline | ScoreStrategy::Proportional => {
                let mut total = 0.0;
                for tree in &self.trees {
                    total += isolation_depth(tree, row, strategy)?;
                }
                let mean_depth = total / self.trees.len() as f64;
                Ok(Score::real((-mean_depth / self.normalizer).exp()))
            }
            ScoreStrategy::Reduced => {
                let mut total = 0.0;
                let mut used = 0usize;
                for (tree, features) in self.trees.iter().zip(&self.feature_sets) {
                    if features.iter().all(|&j| row.is_observed(j)) {
                        let depth = isolation_depth(tree, row, ScoreStrategy::Baseline)?;
                        total += (-depth / self.normalizer).exp();
                        used += 1;
                    }
                }
                if used == 0 {
                    Ok(Score::fallback(NEUTRAL_SCORE))
                } else {
                    Ok(Score::real(total / used as f64))
                }
            }
            ScoreStrategy::Marginal => Err(Error::Config(
                "the marginal strategy applies to density models, not isolation forests".into(),
            )),
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
