//! File formats: Matrix Market (coordinate, real, general) for sparse
//! matrices and headerless row-major CSV for dense blocks.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::io::{load_coo_from_matrix_market_file, save_to_matrix_market_file};
use nalgebra_sparse::CsrMatrix;

use crate::error::{DreError, Result};
use crate::problems::load_generalized;
use crate::rhs::RiccatiProblem;

pub fn read_matrix_market<P: AsRef<Path>>(path: P) -> Result<CsrMatrix<f64>> {
    let path = path.as_ref();
    let coo = load_coo_from_matrix_market_file::<f64, _>(path)
        .map_err(|e| DreError::Parse(format!("{}: {e}", path.display())))?;
    Ok(CsrMatrix::from(&coo))
}

pub fn write_matrix_market<P: AsRef<Path>>(path: P, a: &CsrMatrix<f64>) -> Result<()> {
    save_to_matrix_market_file(a, path).map_err(|e| DreError::Io(e.to_string()))
}

/// Dense block from comma-separated rows; blank lines and `#` comments are
/// skipped. All rows must have the same length.
pub fn read_dense_csv<P: AsRef<Path>>(path: P) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| DreError::Io(format!("{}: {e}", path.display())))?;
    parse_dense_csv(&text).map_err(|e| match e {
        DreError::Parse(msg) => DreError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_dense_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| DreError::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DreError::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

pub fn write_dense_csv<P: AsRef<Path>>(path: P, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DreError::Io(e.to_string()))
}

/// Loads `Ê` (diagonal, any CSV shape), `Â` (Matrix Market), `B̂` and `Ĉ`
/// (CSV) and returns the transformed standard-form problem with `X0 = 0`.
pub fn load_generalized_files(
    e_path: &Path,
    a_path: &Path,
    b_path: &Path,
    c_path: &Path,
) -> Result<RiccatiProblem> {
    let e = read_dense_csv(e_path)?;
    let e = DVector::from_iterator(e.len(), e.transpose().iter().copied());
    let a = read_matrix_market(a_path)?;
    let b = read_dense_csv(b_path)?;
    let c = read_dense_csv(c_path)?;
    load_generalized(&e, &a, &b, &c)
}
