//! CSV and JSON helpers. Inputs may omit the header row; outputs always
//! carry one.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            // a non-numeric first line is a header
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::InvalidParameter(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

/// A vector stored as one value per line.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(path)?;
    if rows.iter().any(|r| r.len() != 1) {
        return Err(Error::InvalidParameter(format!("{}: expected a single column", path.display())));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// A row-major matrix.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let rows = read_rows(path)?;
    if rows.is_empty() {
        return Err(Error::InvalidParameter(format!("{}: empty matrix", path.display())));
    }
    Ok(Matrix::from_rows(&rows))
}

pub fn write_vector(path: &Path, header: &str, v: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record([header])?;
    for x in v {
        w.write_record([fmt_f64(*x)])?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize records with a header row taken from the struct fields.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
