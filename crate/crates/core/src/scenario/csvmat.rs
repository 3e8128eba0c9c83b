//! One matrix per CSV file: one comma-separated row per matrix row, no
//! header. Data matrices store time along the columns.

use std::path::Path;

use super::ScenarioError;
use crate::matcore::Matrix;

pub fn read_csv_matrix(path: &Path) -> Result<Matrix, ScenarioError> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| ScenarioError::io(&shown, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ScenarioError::csv(&shown, 0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    ScenarioError::csv(&shown, line, format!("column {}: `{field}` is not a finite number", col + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(ScenarioError::csv(
                    &shown,
                    line,
                    format!("row has {} entries, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Writes every entry with 17 significant digits.
pub fn write_csv_matrix(path: &Path, m: &Matrix) -> Result<(), ScenarioError> {
    let shown = path.display().to_string();
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| ScenarioError::io(&shown, e))?;
    for row in m.row_iter() {
        writer
            .write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(|e| ScenarioError::io(&shown, e))?;
    }
    writer.flush().map_err(|e| ScenarioError::io(&shown, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        let err = read_csv_matrix(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn bad_number_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "1, 2\n3, x\n").unwrap();
        let err = read_csv_matrix(&path).unwrap_err().to_string();
        assert!(err.contains("column 2"), "{err}");
    }

    #[test]
    fn missing_file() {
        assert!(read_csv_matrix(Path::new("/nonexistent/m.csv")).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..6,
            seed in proptest::collection::vec(-1e12f64..1e12, 30),
            scale in -30i32..30,
        ) {
            let m = Matrix::from_fn(rows, cols, |i, j| seed[i * cols + j] * 10f64.powi(scale));
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            write_csv_matrix(&path, &m).unwrap();
            let back = read_csv_matrix(&path).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
