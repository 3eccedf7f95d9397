//! Ranking metrics.

use crate::error::{Error, Result};

/// Area under the ROC curve via the rank-sum (Mann-Whitney) statistic:
/// the probability that a random anomaly outscores a random nominal, with
/// ties counting half. Runs in O(n log n); equal scores share their
/// midrank, so a constant score vector evaluates to exactly 0.5.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores contain NaN".into()));
    }
    let n_anomaly = labels.iter().filter(|&&l| l == 1).count();
    let n_nominal = labels.len() - n_anomaly;
    if n_anomaly == 0 || n_nominal == 0 {
        return Err(Error::UndefinedAuc(format!(
            "need both classes, got {n_anomaly} anomalies and {n_nominal} nominals"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Midranks over tie groups, accumulated straight into the anomaly
    // rank sum.
    let mut anomaly_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                anomaly_rank_sum += midrank;
            }
        }
        i = j;
    }

    let na = n_anomaly as f64;
    let nn = n_nominal as f64;
    Ok((anomaly_rank_sum - na * (na + 1.0) / 2.0) / (na * nn))
}
