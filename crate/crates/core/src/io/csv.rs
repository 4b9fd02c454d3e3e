//! CSV output of run traces and plain numeric CSV for return scenarios.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::algorithms::{relative_residual, RunTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::problems::ReturnsDataset;

pub const TRACE_HEADER: &str = "iter,epochs,oracle_f,oracle_j,psi,rel_residual,gnorm_sq,subsolver_iters,wall_ms";

/// 17 significant digits, enough to round-trip any `f64`.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

/// Writes one row per record. `rel_residual` is filled only when `psi_star` is given
/// and the record carries an objective value.
pub fn write_trace<W: Write>(trace: &RunTrace, psi_star: Option<f64>, mut out: W) -> Result<()> {
    if trace.records.is_empty() {
        return Err(Error::InvalidInput("trace has no records".into()));
    }
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.records {
        let rel = psi_star.zip(r.psi).map(|(s, p)| relative_residual(p, s));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iter,
            opt_float(r.epochs),
            r.oracle_f,
            r.oracle_j,
            opt_float(r.psi),
            opt_float(rel),
            opt_float(r.gnorm_sq),
            r.subsolver_iters,
            opt_float(r.wall_ms)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv(trace: &RunTrace, psi_star: Option<f64>, path: &Path) -> Result<()> {
    write_trace(trace, psi_star, BufWriter::new(File::create(path)?))
}

/// A parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub record: TraceRecord,
    pub rel_residual: Option<f64>,
}

fn field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse { line, message: format!("bad {name} value '{s}'") })
}

fn opt_field(s: &str, line: usize, name: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s, line, name).map(Some)
    }
}

/// Reads a file produced by [`write_trace`].
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRow>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim_end) != Some(TRACE_HEADER) {
        return Err(Error::Parse { line: 1, message: "missing trace header".into() });
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse { line: lineno, message: format!("expected 9 fields, found {}", f.len()) });
        }
        rows.push(TraceRow {
            record: TraceRecord {
                iter: field(f[0], lineno, "iter")?,
                epochs: opt_field(f[1], lineno, "epochs")?,
                oracle_f: field(f[2], lineno, "oracle_f")?,
                oracle_j: field(f[3], lineno, "oracle_j")?,
                psi: opt_field(f[4], lineno, "psi")?,
                gnorm_sq: opt_field(f[6], lineno, "gnorm_sq")?,
                subsolver_iters: field(f[7], lineno, "subsolver_iters")?,
                wall_ms: opt_field(f[8], lineno, "wall_ms")?,
            },
            rel_residual: opt_field(f[5], lineno, "rel_residual")?,
        });
    }
    Ok(rows)
}

/// One scenario per line, comma-separated.
pub fn write_returns<W: Write>(data: &ReturnsDataset, mut out: W) -> Result<()> {
    for row in data.scenarios().row_iter() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads scenarios written by [`write_returns`]; `c` is their mean. Blank lines and
/// `#` comments are skipped.
pub fn read_returns<R: BufRead>(reader: R) -> Result<ReturnsDataset> {
    let mut values = Vec::new();
    let mut p = None;
    let mut n = 0;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row: Vec<f64> = content
            .split(',')
            .map(|t| field(t.trim(), k + 1, "return"))
            .collect::<Result<_>>()?;
        match p {
            None => p = Some(row.len()),
            Some(p) if p != row.len() => {
                return Err(Error::Parse { line: k + 1, message: format!("expected {p} columns, found {}", row.len()) })
            }
            _ => {}
        }
        values.extend(row);
        n += 1;
    }
    let p = p.ok_or_else(|| Error::InvalidInput("returns file has no scenarios".into()))?;
    ReturnsDataset::from_scenarios(DMatrix::from_row_slice(n, p, &values))
}

pub fn read_returns_file(path: &Path) -> Result<ReturnsDataset> {
    read_returns(BufReader::new(File::open(path)?))
}
