//! Plain-text CSV formats: matrices and vectors (no header, one row per line)
//! and index-set families (one set per line, 1-based indices).

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{FusionFrame, IndexSetProjection};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)?)
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (line, record) in reader(path)?.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: line + 1,
                    message: format!("{field:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(pos) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line + 1,
                message: format!("non-finite value in column {}", pos + 1),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = parse_rows(path)?;
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.is_empty() || cols == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "empty matrix".into(),
        });
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: bad + 1,
            message: format!("expected {cols} columns, found {}", rows[bad].len()),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// A vector stored either as one column or as a single row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected a vector, found a {}x{} matrix", m.nrows(), m.ncols()),
        })
    }
}

/// Several measurement vectors stored as the columns of one file.
pub fn read_columns(path: &Path) -> Result<Vec<DVector<f64>>> {
    let m = read_matrix(path)?;
    Ok(m.column_iter().map(|c| c.into_owned()).collect())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// One value per line.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for &value in v.iter() {
        writeln!(out, "{}", fmt(value))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_index_sets(path: &Path, ambient_dim: usize) -> Result<FusionFrame> {
    let file = BufReader::new(File::open(path)?);
    let mut projections = Vec::new();
    for (line_no, line) in file.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no + 1,
            message,
        };
        let indices = content
            .split(',')
            .map(|f| f.trim())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<usize>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<usize>>>()?;
        let projection = IndexSetProjection::from_one_based(ambient_dim, &indices)
            .map_err(|e| parse_err(e.to_string()))?;
        projections.push(projection);
    }
    FusionFrame::new(ambient_dim, projections)
}

pub fn write_index_sets(path: &Path, frame: &FusionFrame) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for p in frame.projections() {
        let fields: Vec<String> = p.one_based().iter().map(|k| k.to_string()).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}
