//! Dataset ingestion and the CSV formats shared by every module.
//!
//! All CSV files carry a header row, are comma separated and line-feed
//! terminated. Reals are written with 17 significant digits so that a
//! write/read cycle is lossless.

mod folds;
mod single;
mod tu;

pub use folds::make_folds;
pub use single::{load_single_graph, write_single_graph, SingleGraphDataset};
pub use tu::{load_tu_dataset, MultiGraphDataset};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a matrix with header `c0,c1,...`.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for row in m.row_iter() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&fmt_real(*v));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a headed numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (header, rows) = read_numeric_csv(path)?;
    let cols = header.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Dataset(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                row.len(),
                cols
            )));
        }
        data.extend_from_slice(row);
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

/// Reads a headed CSV of reals; returns the header and the rows.
pub(crate) fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = reader.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    Error::Dataset(format!("{}: row {}: `{field}` is not a number", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Writes named columns of equal length.
pub fn write_columns_csv(path: &Path, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.len());
    if columns.len() != names.len() || columns.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidParameter("ragged columns".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", names.join(","))?;
    for i in 0..len {
        let fields: Vec<String> = columns.iter().map(|c| fmt_real(c[i])).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one named column of a headed numeric CSV.
pub fn read_column_csv(path: &Path, name: &str) -> Result<Vec<f64>> {
    let (header, rows) = read_numeric_csv(path)?;
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Dataset(format!("{}: no column `{name}`", path.display())))?;
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.get(idx)
                .copied()
                .ok_or_else(|| Error::Dataset(format!("{}: row {} is short", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matrix_csv_is_lossless(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                let mant: f64 = rng.random_range(-1.0..1.0);
                mant * 10f64.powi(rng.random_range(-300..300))
            });
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            write_matrix_csv(&path, &m).unwrap();
            let back = read_matrix_csv(&path).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "c0,c1\n1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
    }
}
