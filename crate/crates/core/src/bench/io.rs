//! Plain-text matrix, mask and vector files.
//!
//! Matrices are comma-separated rows without a header. Masks list one
//! 1-based `i,j` pair per line. Vectors hold one value per line. Blank lines
//! and lines starting with `#` are skipped everywhere. Values are written
//! with 17 significant digits, which round-trips every `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, ObservationMask};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{}` is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, l) in data_lines(text) {
        let row = l.split(',').map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {line}: {} fields, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix file".into()));
    }
    Matrix::from_rows(&rows)
}

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    Ok(fs::write(path, matrix_to_csv(m))?)
}

pub fn parse_mask_csv(text: &str, rows: usize, cols: usize) -> Result<ObservationMask> {
    let mut pairs = Vec::new();
    for (line, l) in data_lines(text) {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected `i,j`")));
        }
        let idx = |f: &str| -> Result<usize> {
            let v: usize = f
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: `{f}` is not an index")))?;
            v.checked_sub(1)
                .ok_or_else(|| Error::Parse(format!("line {line}: indices are 1-based")))
        };
        pairs.push((idx(fields[0])?, idx(fields[1])?));
    }
    ObservationMask::new(rows, cols, pairs)
}

pub fn mask_to_csv(mask: &ObservationMask) -> String {
    mask.known()
        .iter()
        .map(|&(i, j)| format!("{},{}\n", i + 1, j + 1))
        .collect()
}

pub fn read_mask_csv(path: &Path, rows: usize, cols: usize) -> Result<ObservationMask> {
    parse_mask_csv(&fs::read_to_string(path)?, rows, cols)
}

pub fn write_mask_csv(path: &Path, mask: &ObservationMask) -> Result<()> {
    Ok(fs::write(path, mask_to_csv(mask))?)
}

/// One value per line; a single comma-separated line is also accepted.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        for f in l.split(',') {
            out.push(parse_f64(f, line)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty vector file".into()));
    }
    Ok(out)
}

pub fn vector_to_text(v: &[f64]) -> String {
    v.iter().map(|x| format_f64(*x) + "\n").collect()
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    Ok(fs::write(path, vector_to_text(v))?)
}
