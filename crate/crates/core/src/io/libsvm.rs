//! LIBSVM sparse text format: `<label> <index>:<value> ...` with 1-based, strictly
//! ascending indices. Anything after `#` is a comment.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::SparseVector;
use crate::problems::ClassificationDataset;

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_error(line, format!("label '{token}' is not a number")))?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(parse_error(line, format!("label '{token}' is not -1, 0 or +1")))
    }
}

/// Parses a whole LIBSVM stream. Labels `0` are mapped to `-1`; `p` is the largest
/// feature index seen. Errors carry the 1-based line number.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<ClassificationDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut p = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        let Some(first) = tokens.next() else { continue };
        labels.push(parse_label(first, lineno)?);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, format!("feature '{tok}' is not index:value")))?;
            let idx: usize = i
                .parse()
                .map_err(|_| parse_error(lineno, format!("feature index '{i}' is not a positive integer")))?;
            if idx == 0 {
                return Err(parse_error(lineno, "feature indices are 1-based"));
            }
            let val: f64 = v
                .parse()
                .map_err(|_| parse_error(lineno, format!("feature value '{v}' is not a number")))?;
            if !val.is_finite() {
                return Err(parse_error(lineno, format!("feature value '{v}' is not finite")));
            }
            if indices.last().is_some_and(|&last| idx - 1 <= last) {
                return Err(parse_error(lineno, format!("feature index {idx} is not strictly ascending")));
            }
            indices.push(idx - 1);
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            p = p.max(last + 1);
        }
        rows.push((indices, values));
    }
    let rows = rows.into_iter().map(|(i, v)| SparseVector::new(p, i, v)).collect();
    ClassificationDataset::new(rows, labels, p)
}

/// Writes `data` in LIBSVM format. Offsets are not part of the format and are dropped.
pub fn write_libsvm<W: Write>(data: &ClassificationDataset, mut out: W) -> Result<()> {
    for i in 0..data.n() {
        let label = if data.label(i) > 0.0 { "+1" } else { "-1" };
        write!(out, "{label}")?;
        for (j, v) in data.row(i).iter() {
            write!(out, " {}:{}", j + 1, v)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
