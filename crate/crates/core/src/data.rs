//! NA-aware matrix storage shared by every detector and the harness.

use crate::error::{Error, Result};

/// Row-major numeric matrix with a parallel observedness mask.
///
/// `mask[i][j] == true` means cell `(i, j)` is observed; when false the
/// stored numeric payload is meaningless and must be ignored. The matrix is
/// immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MaskedMatrix {
    /// Build from parallel value/mask slabs (row-major).
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if n_cols == 0 {
            return Err(Error::Config("matrix must have at least one column".into()));
        }
        if values.len() != n_rows * n_cols || mask.len() != n_rows * n_cols {
            return Err(Error::Config(format!(
                "shape mismatch: {} rows x {} cols needs {} cells, got {} values and {} mask entries",
                n_rows,
                n_cols,
                n_rows * n_cols,
                values.len(),
                mask.len()
            )));
        }
        Ok(MaskedMatrix {
            n_rows,
            n_cols,
            values,
            mask,
        })
    }

    /// Fully observed matrix from a row-major value slab.
    pub fn from_dense(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        MaskedMatrix::new(n_rows, n_cols, values, mask)
    }

    /// Fully observed matrix from per-row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Format("rows have differing lengths".into()));
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        MaskedMatrix::from_dense(rows.len(), n_cols.max(1), values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.n_cols + col]
    }

    /// Observed value at `(row, col)`, or `None` when masked out.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if self.is_observed(row, col) {
            Some(self.values[row * self.n_cols + col])
        } else {
            None
        }
    }

    /// Raw payload, ignoring the mask. Only meaningful on observed cells.
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> MaskedRow<'_> {
        let start = row * self.n_cols;
        MaskedRow {
            values: &self.values[start..start + self.n_cols],
            mask: &self.mask[start..start + self.n_cols],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = MaskedRow<'_>> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn n_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Copy with one cell masked out. Used by the MCAR injector.
    pub(crate) fn hide(&mut self, row: usize, col: usize) {
        self.mask[row * self.n_cols + col] = false;
    }

    /// Dense row-major view of the values; caller must know the matrix is
    /// fully observed (e.g. training data) for this to be meaningful.
    pub(crate) fn dense_values(&self) -> &[f64] {
        &self.values
    }
}

/// Borrowed view of one matrix row plus its mask.
#[derive(Debug, Clone, Copy)]
pub struct MaskedRow<'a> {
    pub values: &'a [f64],
    pub mask: &'a [bool],
}

impl<'a> MaskedRow<'a> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_observed(&self, col: usize) -> bool {
        self.mask[col]
    }

    pub fn get(&self, col: usize) -> Option<f64> {
        if self.mask[col] {
            Some(self.values[col])
        } else {
            None
        }
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.mask[j]).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// A feature matrix with optional binary labels (1 = anomaly, 0 = nominal).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: MaskedMatrix,
    /// Per-row labels; `None` for unlabeled data loaded without a label column.
    pub labels: Option<Vec<u8>>,
    /// Header names for the feature columns, preserved through CSV round trips.
    pub feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: MaskedMatrix,
        labels: Option<Vec<u8>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if let Some(ref l) = labels {
            if l.len() != features.n_rows() {
                return Err(Error::Config(format!(
                    "label count {} does not match row count {}",
                    l.len(),
                    features.n_rows()
                )));
            }
            if let Some(bad) = l.iter().find(|&&v| v > 1) {
                return Err(Error::Config(format!("labels must be 0 or 1, got {bad}")));
            }
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::Config(format!(
                "feature name count {} does not match column count {}",
                feature_names.len(),
                features.n_cols()
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            feature_names,
        })
    }

    /// Labels, or an error for unlabeled data.
    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Config("dataset has no labels".into()))
    }

    pub(crate) fn default_names(n_cols: usize) -> Vec<String> {
        (0..n_cols).map(|j| format!("x{j}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_controls_visibility() {
        let m = MaskedMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![true, false, true, true])
            .unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.n_missing(), 1);
        assert!(!m.is_fully_observed());
        let row = m.row(0);
        assert_eq!(row.observed_indices(), vec![0]);
        assert!(!row.is_fully_observed());
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(MaskedMatrix::new(2, 2, vec![0.0; 3], vec![true; 4]).is_err());
        assert!(MaskedMatrix::new(1, 0, vec![], vec![]).is_err());
    }

    #[test]
    fn zero_rows_allowed() {
        let m = MaskedMatrix::from_dense(0, 3, vec![]).unwrap();
        assert_eq!(m.n_rows(), 0);
        assert_eq!(m.n_cols(), 3);
    }

    #[test]
    fn label_length_enforced() {
        let m = MaskedMatrix::from_dense(2, 1, vec![1.0, 2.0]).unwrap();
        let names = LabeledDataset::default_names(1);
        assert!(LabeledDataset::new(m.clone(), Some(vec![0]), names.clone()).is_err());
        assert!(LabeledDataset::new(m.clone(), Some(vec![0, 2]), names.clone()).is_err());
        assert!(LabeledDataset::new(m, Some(vec![0, 1]), names).is_ok());
    }
}
