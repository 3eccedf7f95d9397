//! Synthetic benchmark generators and the MCAR missingness injector.
//!
//! Four dataset families over `d`-dimensional points (10% anomalies by
//! default): independent Gaussians, the same plus uniform noise columns,
//! correlated Gaussians strung along the diagonal line, and a three-cluster
//! Gaussian mixture with anomalies near the cluster triangle's center.
//! The injector hides a fraction `rho` of feature values per row, split
//! between `floor(rho d)` and `ceil(rho d)` cells so the average is exact.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, MaskedMatrix};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::rng::SeededRng;

/// Which synthetic family to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Uncorrelated,
    Noise,
    Correlated,
    Mixture,
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthKind::Uncorrelated => "uncorrelated",
            SynthKind::Noise => "noise",
            SynthKind::Correlated => "correlated",
            SynthKind::Mixture => "mixture",
        })
    }
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncorrelated" => Ok(SynthKind::Uncorrelated),
            "noise" => Ok(SynthKind::Noise),
            "correlated" => Ok(SynthKind::Correlated),
            "mixture" => Ok(SynthKind::Mixture),
            other => Err(Error::Config(format!(
                "unknown synthetic config {other:?} (expected uncorrelated, noise, correlated, or mixture)"
            ))),
        }
    }
}

/// Generator parameters. `cov_diag` is the covariance diagonal and
/// `rho_corr` the off-diagonal for the correlated/mixture families;
/// `anomaly_shift` scales the offset separating anomalies from nominals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub n: usize,
    pub d: usize,
    pub anomaly_frac: f64,
    pub rho_corr: f64,
    pub cov_diag: f64,
    pub anomaly_shift: f64,
    /// Extra uniform columns appended by the noise family.
    pub n_noise: usize,
}

impl SynthConfig {
    pub fn new(kind: SynthKind) -> Self {
        SynthConfig {
            kind,
            n: 3000,
            d: 8,
            anomaly_frac: 0.10,
            rho_corr: 0.4,
            cov_diag: 2.0,
            anomaly_shift: 2.0,
            n_noise: 5,
        }
    }

    /// The values cycled through by correlated/mixture replicates.
    pub const RHO_CORR_GRID: [f64; 4] = [0.4, 0.6, 0.8, 1.2];

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("n and d must be positive".into()));
        }
        if !(self.anomaly_frac > 0.0 && self.anomaly_frac < 1.0) {
            return Err(Error::Config(format!(
                "anomaly_frac must lie in (0, 1), got {}",
                self.anomaly_frac
            )));
        }
        if matches!(self.kind, SynthKind::Correlated | SynthKind::Mixture)
            && self.cov_diag <= self.rho_corr
        {
            return Err(Error::Config(format!(
                "cov_diag ({}) must exceed rho_corr ({}) for a positive-definite covariance",
                self.cov_diag, self.rho_corr
            )));
        }
        Ok(())
    }
}

/// Row-major matrix with `diag` on the diagonal and `off` elsewhere.
pub fn equicorrelation_matrix(d: usize, diag: f64, off: f64) -> Vec<f64> {
    let mut m = vec![off; d * d];
    for i in 0..d {
        m[i * d + i] = diag;
    }
    m
}

/// Lower-triangular scale matrix with a constant diagonal and constant
/// strictly-lower entries; the mixture family's covariances are `L L^T`.
fn lower_triangular_scale(d: usize, diag: f64, lower: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..i {
            m[i * d + j] = lower;
        }
        m[i * d + i] = diag;
    }
    m
}

/// `(+scale, -scale, +scale, ...)`.
fn alternating_offset(d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|j| if j % 2 == 0 { scale } else { -scale })
        .collect()
}

fn standard_normal_vec(d: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draw one dataset. Rows are shuffled so labels carry no positional hint.
pub fn generate(cfg: &SynthConfig, rng: &mut SeededRng) -> Result<LabeledDataset> {
    cfg.validate()?;
    let n_nominal = ((1.0 - cfg.anomaly_frac) * cfg.n as f64).round() as usize;
    let n_anomaly = cfg.n - n_nominal;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.n);
    let mut labels: Vec<u8> = Vec::with_capacity(cfg.n);

    match cfg.kind {
        SynthKind::Uncorrelated | SynthKind::Noise => {
            for _ in 0..n_nominal {
                rows.push(standard_normal_vec(cfg.d, rng));
                labels.push(0);
            }
            for _ in 0..n_anomaly {
                let mut row = standard_normal_vec(cfg.d, rng);
                row.iter_mut().for_each(|v| *v += 3.0);
                rows.push(row);
                labels.push(1);
            }
            if cfg.kind == SynthKind::Noise {
                for row in rows.iter_mut() {
                    for _ in 0..cfg.n_noise {
                        row.push(rng.random::<f64>() * 2.0 - 1.0);
                    }
                }
            }
        }
        SynthKind::Correlated => {
            let sigma = equicorrelation_matrix(cfg.d, cfg.cov_diag, cfg.rho_corr);
            let chol = Cholesky::decompose(&sigma, cfg.d).ok_or_else(|| {
                Error::Config("correlated covariance is not positive-definite".into())
            })?;
            let offset = alternating_offset(cfg.d, cfg.anomaly_shift);
            let mut noise = vec![0.0; cfg.d];
            for (count, label) in [(n_nominal, 0u8), (n_anomaly, 1u8)] {
                for _ in 0..count {
                    let u = rng.random::<f64>() * 6.0 - 3.0;
                    let z = standard_normal_vec(cfg.d, rng);
                    chol.lower_times(&z, &mut noise);
                    let row: Vec<f64> = (0..cfg.d)
                        .map(|j| u + noise[j] + if label == 1 { offset[j] } else { 0.0 })
                        .collect();
                    rows.push(row);
                    labels.push(label);
                }
            }
        }
        SynthKind::Mixture => {
            let spread = lower_triangular_scale(cfg.d, cfg.cov_diag, cfg.rho_corr);
            let tight = lower_triangular_scale(cfg.d, 1.0, cfg.rho_corr);
            let means: [Vec<f64>; 3] = [
                vec![-3.0; cfg.d],
                (0..cfg.d)
                    .map(|j| if j % 2 == 0 { 3.0 } else { -3.0 })
                    .collect(),
                vec![3.0; cfg.d],
            ];
            let scales = [&spread, &tight, &spread];
            let mut noise = vec![0.0; cfg.d];
            for _ in 0..n_nominal {
                let c = rng.random_range(0..3usize);
                let z = standard_normal_vec(cfg.d, rng);
                lower_times_dense(scales[c], cfg.d, &z, &mut noise);
                rows.push((0..cfg.d).map(|j| means[c][j] + noise[j]).collect());
                labels.push(0);
            }
            // One anomaly center per dataset: uniform jitter plus the
            // alternating offset, identity covariance.
            let center: Vec<f64> = alternating_offset(cfg.d, 2.0)
                .into_iter()
                .map(|o| o + rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            for _ in 0..n_anomaly {
                let z = standard_normal_vec(cfg.d, rng);
                rows.push((0..cfg.d).map(|j| center[j] + z[j]).collect());
                labels.push(1);
            }
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    let shuffled_rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
    let shuffled_labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();

    let features = MaskedMatrix::from_rows(&shuffled_rows)?;
    let names = LabeledDataset::default_names(features.n_cols());
    LabeledDataset::new(features, Some(shuffled_labels), names)
}

fn lower_times_dense(l: &[f64], d: usize, z: &[f64], out: &mut [f64]) {
    for i in 0..d {
        out[i] = (0..=i).map(|k| l[i * d + k] * z[k]).sum();
    }
}

/// Per-row missing counts for a fraction `rho`: all rows hide
/// `floor(rho d)` cells except `round(frac(rho d) * n)` rows that hide one
/// more, so the average per row is exactly `rho d`.
pub fn mcar_allocation(rho: f64, d: usize, n_rows: usize) -> (usize, usize) {
    let mu = rho * d as f64;
    let m_low = mu.floor() as usize;
    let n_high = ((mu - m_low as f64) * n_rows as f64).round() as usize;
    (m_low, n_high)
}

/// Hide a fraction `rho` of feature values per row, completely at random:
/// the missing positions depend only on the generator, never on the data.
pub fn inject_mcar(data: &MaskedMatrix, rho: f64, rng: &mut SeededRng) -> Result<MaskedMatrix> {
    if !(0.0..=0.9).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [0, 0.9], got {rho}")));
    }
    if !data.is_fully_observed() {
        return Err(Error::UnsupportedInput(
            "injection expects a fully observed matrix".into(),
        ));
    }
    if rho == 0.0 {
        return Ok(data.clone());
    }
    let n = data.n_rows();
    let d = data.n_cols();
    let (m_low, n_high) = mcar_allocation(rho, d, n);
    let mut is_high = vec![false; n];
    for i in index::sample(rng, n, n_high.min(n)) {
        is_high[i] = true;
    }
    let mut out = data.clone();
    for (i, &high) in is_high.iter().enumerate() {
        let hide = (m_low + usize::from(high)).min(d);
        if hide == 0 {
            continue;
        }
        for col in index::sample(rng, d, hide) {
            out.hide(i, col);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: SynthKind) -> SynthConfig {
        SynthConfig::new(kind)
    }

    fn column_means(ds: &LabeledDataset, label: u8) -> Vec<f64> {
        let labels = ds.labels.as_ref().unwrap();
        let m = &ds.features;
        let rows: Vec<usize> = (0..m.n_rows()).filter(|&i| labels[i] == label).collect();
        (0..m.n_cols())
            .map(|j| rows.iter().map(|&i| m.value(i, j)).sum::<f64>() / rows.len() as f64)
            .collect()
    }

    #[test]
    fn uncorrelated_counts_and_means() {
        let ds = generate(&config(SynthKind::Uncorrelated), &mut SeededRng::new(1)).unwrap();
        let labels = ds.labels.as_ref().unwrap();
        let anomalies = labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(ds.features.n_rows(), 3000);
        assert_eq!(anomalies, 300);
        for m in column_means(&ds, 0) {
            assert!(m.abs() < 0.1, "nominal mean {m}");
        }
        for m in column_means(&ds, 1) {
            assert!((m - 3.0).abs() < 0.2, "anomaly mean {m}");
        }
    }

    #[test]
    fn noise_family_appends_uniform_columns() {
        let ds = generate(&config(SynthKind::Noise), &mut SeededRng::new(2)).unwrap();
        assert_eq!(ds.features.n_cols(), 13);
        let m = &ds.features;
        let labels = ds.labels.as_ref().unwrap();
        for j in 8..13 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..m.n_rows() {
                let v = m.value(i, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(lo >= -1.0 && hi <= 1.0, "noise column {j} range [{lo}, {hi}]");
            // Correlation with the label stays at chance level.
            let mean_all: f64 = (0..m.n_rows()).map(|i| m.value(i, j)).sum::<f64>() / 3000.0;
            let mean_label: f64 = labels.iter().map(|&l| l as f64).sum::<f64>() / 3000.0;
            let mut cov = 0.0;
            let mut var_x = 0.0;
            let mut var_y = 0.0;
            for i in 0..m.n_rows() {
                let dx = m.value(i, j) - mean_all;
                let dy = labels[i] as f64 - mean_label;
                cov += dx * dy;
                var_x += dx * dx;
                var_y += dy * dy;
            }
            let r = cov / (var_x.sqrt() * var_y.sqrt());
            assert!(r.abs() < 0.06, "noise column {j} label correlation {r}");
        }
    }

    #[test]
    fn equicorrelation_matrix_matches_hand_construction() {
        let sigma = equicorrelation_matrix(3, 2.0, 0.4);
        assert_eq!(sigma, vec![2.0, 0.4, 0.4, 0.4, 2.0, 0.4, 0.4, 0.4, 2.0]);
    }

    #[test]
    fn equicorrelation_eigenvalues_match_closed_form() {
        // For diagonal c and off-diagonal rho, the all-ones vector has
        // eigenvalue c + (d-1) rho and any difference vector c - rho.
        let d = 8;
        let (c, rho) = (2.0, 1.2);
        let sigma = equicorrelation_matrix(d, c, rho);
        let ones = vec![1.0; d];
        let mut out = vec![0.0; d];
        crate::linalg::mat_vec(&sigma, d, &ones, &mut out);
        for v in &out {
            assert!((v - (c + (d as f64 - 1.0) * rho)).abs() < 1e-12);
            assert!((v - 10.4).abs() < 1e-12);
        }
        let mut diff = vec![0.0; d];
        diff[0] = 1.0;
        diff[1] = -1.0;
        crate::linalg::mat_vec(&sigma, d, &diff, &mut out);
        assert!((out[0] - 0.8).abs() < 1e-12);
        assert!((out[1] + 0.8).abs() < 1e-12);
        // All eigenvalues positive, so the matrix is positive-definite.
        assert!(Cholesky::decompose(&sigma, d).is_some());
    }

    #[test]
    fn correlated_anomalies_sit_at_the_alternating_offset() {
        let mut cfg = config(SynthKind::Correlated);
        cfg.rho_corr = 0.8;
        let ds = generate(&cfg, &mut SeededRng::new(3)).unwrap();
        let nominal = column_means(&ds, 0);
        let anomaly = column_means(&ds, 1);
        for j in 0..8 {
            let want = if j % 2 == 0 { 2.0 } else { -2.0 };
            let gap = anomaly[j] - nominal[j];
            assert!((gap - want).abs() < 0.5, "column {j}: gap {gap}");
        }
    }

    #[test]
    fn correlated_rejects_non_positive_definite_setup() {
        let mut cfg = config(SynthKind::Correlated);
        cfg.rho_corr = 2.5; // above cov_diag
        assert!(generate(&cfg, &mut SeededRng::new(4))
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn mixture_scale_products_are_positive_definite() {
        for (diag, rho) in [(2.0, 0.4), (2.0, 1.2), (1.0, 0.8)] {
            let d = 8;
            let l = lower_triangular_scale(d, diag, rho);
            let mut product = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    product[i * d + j] = (0..d).map(|k| l[i * d + k] * l[j * d + k]).sum();
                }
            }
            assert!(
                Cholesky::decompose(&product, d).is_some(),
                "diag {diag} rho {rho}"
            );
        }
    }

    #[test]
    fn mixture_anomaly_center_is_inside_the_offset_box() {
        for seed in 0..5 {
            let ds = generate(&config(SynthKind::Mixture), &mut SeededRng::new(seed)).unwrap();
            let anomaly = column_means(&ds, 1);
            for (j, m) in anomaly.iter().enumerate() {
                if j % 2 == 0 {
                    assert!((0.8..=3.2).contains(m), "column {j} mean {m}");
                } else {
                    assert!((-3.2..=-0.8).contains(m), "column {j} mean {m}");
                }
            }
        }
    }

    #[test]
    fn mixture_nominals_recover_three_cluster_centers() {
        let ds = generate(&config(SynthKind::Mixture), &mut SeededRng::new(6)).unwrap();
        let labels = ds.labels.as_ref().unwrap();
        let m = &ds.features;
        let d = m.n_cols();
        let targets: Vec<Vec<f64>> = vec![
            vec![-3.0; d],
            (0..d).map(|j| if j % 2 == 0 { 3.0 } else { -3.0 }).collect(),
            vec![3.0; d],
        ];
        // A few Lloyd iterations seeded at the construction's centers.
        let mut centers = targets.clone();
        for _ in 0..20 {
            let mut sums = vec![vec![0.0; d]; 3];
            let mut counts = [0usize; 3];
            for i in 0..m.n_rows() {
                if labels[i] != 0 {
                    continue;
                }
                let row: Vec<f64> = (0..d).map(|j| m.value(i, j)).collect();
                let nearest = (0..3)
                    .min_by(|&a, &b| {
                        let da: f64 = row
                            .iter()
                            .zip(&centers[a])
                            .map(|(x, c)| (x - c) * (x - c))
                            .sum();
                        let db: f64 = row
                            .iter()
                            .zip(&centers[b])
                            .map(|(x, c)| (x - c) * (x - c))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                counts[nearest] += 1;
                for (s, v) in sums[nearest].iter_mut().zip(&row) {
                    *s += v;
                }
            }
            for c in 0..3 {
                for j in 0..d {
                    centers[c][j] = sums[c][j] / counts[c] as f64;
                }
            }
        }
        for target in &targets {
            let best = centers
                .iter()
                .map(|c| {
                    (c.iter()
                        .zip(target)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        / d as f64)
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.5, "no recovered center within 0.5 of {target:?}");
        }
    }

    #[test]
    fn allocation_reproduces_the_600_400_split() {
        assert_eq!(mcar_allocation(0.3, 8, 1000), (2, 400));
        let data = MaskedMatrix::from_dense(1000, 8, vec![1.0; 8000]).unwrap();
        let out = inject_mcar(&data, 0.3, &mut SeededRng::new(7)).unwrap();
        let mut with_two = 0;
        let mut with_three = 0;
        for i in 0..1000 {
            match (0..8).filter(|&j| !out.is_observed(i, j)).count() {
                2 => with_two += 1,
                3 => with_three += 1,
                other => panic!("row {i} has {other} missing cells"),
            }
        }
        assert_eq!(with_two, 600);
        assert_eq!(with_three, 400);
    }

    #[test]
    fn zero_rho_is_identity() {
        let data = MaskedMatrix::from_dense(50, 4, (0..200).map(|v| v as f64).collect()).unwrap();
        let out = inject_mcar(&data, 0.0, &mut SeededRng::new(8)).unwrap();
        assert_eq!(out, data);
    }

    #[test]
    fn integral_rho_d_hits_every_row_equally() {
        let data = MaskedMatrix::from_dense(200, 8, vec![0.5; 1600]).unwrap();
        let out = inject_mcar(&data, 0.5, &mut SeededRng::new(9)).unwrap();
        for i in 0..200 {
            let missing = (0..8).filter(|&j| !out.is_observed(i, j)).count();
            assert_eq!(missing, 4, "row {i}");
        }
    }

    #[test]
    fn mask_depends_only_on_the_generator() {
        let a = MaskedMatrix::from_dense(100, 5, vec![1.0; 500]).unwrap();
        let b =
            MaskedMatrix::from_dense(100, 5, (0..500).map(|v| v as f64 * 0.1).collect()).unwrap();
        let out_a = inject_mcar(&a, 0.4, &mut SeededRng::new(10)).unwrap();
        let out_b = inject_mcar(&b, 0.4, &mut SeededRng::new(10)).unwrap();
        for i in 0..100 {
            for j in 0..5 {
                assert_eq!(out_a.is_observed(i, j), out_b.is_observed(i, j));
            }
        }
    }

    #[test]
    fn rho_bounds_are_enforced() {
        let data = MaskedMatrix::from_dense(10, 2, vec![0.0; 20]).unwrap();
        assert!(inject_mcar(&data, -0.1, &mut SeededRng::new(11))
            .unwrap_err()
            .is_config());
        assert!(inject_mcar(&data, 0.95, &mut SeededRng::new(11))
            .unwrap_err()
            .is_config());
        let holed = {
            let mut m = data.clone();
            m.hide(0, 0);
            m
        };
        assert!(matches!(
            inject_mcar(&holed, 0.5, &mut SeededRng::new(11)),
            Err(Error::UnsupportedInput(_))
        ));
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        for kind in [
            SynthKind::Uncorrelated,
            SynthKind::Noise,
            SynthKind::Correlated,
            SynthKind::Mixture,
        ] {
            let a = generate(&config(kind), &mut SeededRng::new(42)).unwrap();
            let b = generate(&config(kind), &mut SeededRng::new(42)).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }
}
