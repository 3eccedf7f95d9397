//! CSV reading and writing.
//!
//! The on-disk format is deliberately small: UTF-8, comma separated, one
//! header row, and cells that are either decimal numbers or the literal
//! token `NA` for a missing value. Numbers are written with Rust's shortest
//! round-trip formatting, so write-then-load reproduces every observed cell
//! bit for bit. No other missing-value sentinel is recognized on input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{LabeledDataset, MaskedMatrix};
use crate::error::{Error, Result};

pub const NA_TOKEN: &str = "NA";

/// A table of named numeric columns; `None` cells serialize as `NA`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new() -> Self {
        Table::default()
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) {
        self.names.push(name.into());
        self.columns.push(values);
    }

    pub fn push_dense_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.push_column(name, values.into_iter().map(Some).collect());
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(|c| c.len()).unwrap_or(0)
    }

    /// Column-per-feature view of a masked matrix.
    pub fn from_matrix(matrix: &MaskedMatrix, names: &[String]) -> Result<Self> {
        if names.len() != matrix.n_cols() {
            return Err(Error::Config(format!(
                "{} column names for a {}-column matrix",
                names.len(),
                matrix.n_cols()
            )));
        }
        let mut table = Table::new();
        for (j, name) in names.iter().enumerate() {
            let col = (0..matrix.n_rows()).map(|i| matrix.get(i, j)).collect();
            table.push_column(name.clone(), col);
        }
        Ok(table)
    }

    /// Features plus a trailing `label` column when labels are present.
    pub fn from_dataset(ds: &LabeledDataset, label_name: &str) -> Result<Self> {
        let mut table = Table::from_matrix(&ds.features, &ds.feature_names)?;
        if let Some(labels) = &ds.labels {
            table.push_dense_column(label_name, labels.iter().map(|&l| l as f64).collect());
        }
        Ok(table)
    }
}

fn format_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => NA_TOKEN.to_string(),
    }
}

/// Serialize a table to CSV text. All columns must have the same length.
pub fn to_csv_string(table: &Table) -> Result<String> {
    if table.names.is_empty() {
        return Err(Error::Config("cannot write a table with no columns".into()));
    }
    let n_rows = table.n_rows();
    if table.columns.iter().any(|c| c.len() != n_rows) {
        return Err(Error::Config("table columns have differing lengths".into()));
    }
    let mut out = String::new();
    out.push_str(&table.names.join(","));
    out.push('\n');
    for i in 0..n_rows {
        for (j, col) in table.columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_cell(col[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Write a table as CSV (header row, `NA` for missing cells).
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_csv_string(table)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Convenience: write a dataset with its feature names and a `label` column.
pub fn write_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(&Table::from_dataset(ds, "label")?, path)
}

fn parse_label(raw: &str, row: usize, column: &str) -> Result<u8> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("expected a 0/1 label, got {raw:?}"),
    })?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("labels must be 0 or 1, got {raw:?}"),
        })
    }
}

/// Parse CSV text into a dataset.
///
/// When `label_column` is given, that column is removed from the features
/// and parsed as binary labels. All other cells must be numbers or `NA`.
pub fn parse_csv(text: &str, label_column: Option<&str>) -> Result<LabeledDataset> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty file: missing header row".into()))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::Format("header row has an empty column name".into()));
    }

    let label_idx = match label_column {
        Some(name) => Some(
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("label column {name:?} not found")))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, n)| n.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::Format("no feature columns left after removing the label".into()));
    }

    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut labels = Vec::new();
    let mut n_rows = 0usize;
    for (line_no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = line_no + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::Format(format!(
                "ragged row {row}: expected {} cells, got {}",
                names.len(),
                cells.len()
            )));
        }
        for (j, raw) in cells.iter().enumerate() {
            let raw = raw.trim();
            if Some(j) == label_idx {
                labels.push(parse_label(raw, row, &names[j])?);
                continue;
            }
            if raw == NA_TOKEN {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    row,
                    column: names[j].clone(),
                    message: format!("expected a number or NA, got {raw:?}"),
                })?;
                values.push(v);
                mask.push(true);
            }
        }
        n_rows += 1;
    }

    let features = MaskedMatrix::new(n_rows, feature_names.len(), values, mask)?;
    let labels = label_idx.map(|_| labels);
    LabeledDataset::new(features, labels, feature_names)
}

/// Load a CSV file; see [`parse_csv`] for the format contract.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, label_column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn na_token_sets_mask() {
        let ds = parse_csv("a,b\n1.0,NA\n2.0,3.0", None).unwrap();
        assert_eq!(ds.features.n_rows(), 2);
        assert_eq!(ds.features.n_cols(), 2);
        assert!(!ds.features.is_observed(0, 1));
        assert_eq!(ds.features.get(0, 0), Some(1.0));
        assert_eq!(ds.features.get(1, 1), Some(3.0));
        assert!(ds.labels.is_none());
    }

    #[test]
    fn label_column_removed_and_parsed() {
        let ds = parse_csv("a,label\n5,1\n6,0", Some("label")).unwrap();
        assert_eq!(ds.features.n_cols(), 1);
        assert_eq!(ds.features.get(0, 0), Some(5.0));
        assert_eq!(ds.labels, Some(vec![1, 0]));
        assert_eq!(ds.feature_names, vec!["a".to_string()]);
    }

    #[test]
    fn malformed_number_reports_position() {
        let err = parse_csv("a\nxyz", None).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_label_column_is_config_error() {
        let err = parse_csv("a\n1.0", Some("label")).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(
            parse_csv("a,b\n1.0", None).unwrap_err(),
            Error::Format(_)
        ));
    }

    #[test]
    fn single_cell_table() {
        let mut t = Table::new();
        t.push_dense_column("x", vec![1.0]);
        assert_eq!(to_csv_string(&t).unwrap(), "x\n1\n");
    }

    #[test]
    fn na_cell_emitted() {
        let mut t = Table::new();
        t.push_column("x", vec![Some(1.5), None]);
        assert_eq!(to_csv_string(&t).unwrap(), "x\n1.5\nNA\n");
    }

    #[test]
    fn sentinel_values_are_not_missing() {
        let ds = parse_csv("a\n-999\n", None).unwrap();
        assert_eq!(ds.features.get(0, 0), Some(-999.0));
    }

    fn round_trip(matrix: &MaskedMatrix) -> MaskedMatrix {
        let names = LabeledDataset::default_names(matrix.n_cols());
        let text = to_csv_string(&Table::from_matrix(matrix, &names).unwrap()).unwrap();
        parse_csv(&text, None).unwrap().features
    }

    #[test]
    fn write_then_load_is_identity() {
        let m = MaskedMatrix::new(
            2,
            3,
            vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, 0.0, 9.9],
            vec![true, false, true, true, true, false],
        )
        .unwrap();
        let back = round_trip(&m);
        assert_eq!(back.n_rows(), 2);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(back.get(i, j), m.get(i, j));
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_preserves_observed_cells_and_mask(
            cells in proptest::collection::vec((any::<f64>(), any::<bool>()), 1..60),
            n_cols in 1usize..6,
        ) {
            let n_rows = cells.len() / n_cols;
            let cells = &cells[..n_rows * n_cols];
            prop_assume!(n_rows >= 1);
            prop_assume!(cells.iter().all(|(v, _)| v.is_finite()));
            let values: Vec<f64> = cells.iter().map(|(v, _)| *v).collect();
            let mask: Vec<bool> = cells.iter().map(|(_, m)| *m).collect();
            let m = MaskedMatrix::new(n_rows, n_cols, values, mask).unwrap();
            let back = round_trip(&m);
            prop_assert_eq!(back.n_rows(), m.n_rows());
            for i in 0..n_rows {
                for j in 0..n_cols {
                    prop_assert_eq!(back.get(i, j), m.get(i, j));
                }
            }
        }
    }
}
