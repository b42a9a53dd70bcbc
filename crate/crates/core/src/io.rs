//! Reading point sets and reading/writing matrices and audit reports.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::distance::{DistanceMatrix, MetricAuditReport};
use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Points in file order with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<Point3>,
    pub labels: Vec<String>,
}

/// Loads `x,y,z` rows, optionally preceded by a label column and/or a header
/// row naming the columns. Unlabelled rows are labelled by their 1-based
/// position among the data rows. Lines starting with `#` are skipped.
pub fn load_points_csv(path: impl AsRef<Path>) -> Result<PointSet> {
    read_points_csv(File::open(path)?)
}

pub fn read_points_csv(reader: impl Read) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut set = PointSet { points: Vec::new(), labels: Vec::new() };
    let mut width = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: e.position().map_or(k + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(k + 1, |p| p.line() as usize);
        let fields: Vec<&str> = rec.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 && is_header(&fields) {
            width = Some(fields.len());
            continue;
        }
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse { row, message: format!("expected 3 or 4 fields, found {}", fields.len()) });
        }
        if let Some(w) = width {
            if w != fields.len() {
                return Err(Error::Parse { row, message: format!("expected {w} fields, found {}", fields.len()) });
            }
        }
        width = Some(fields.len());
        let offset = fields.len() - 3;
        let mut c = [0.0; 3];
        for (slot, text) in c.iter_mut().zip(&fields[offset..]) {
            *slot = text
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { row, message: format!("not a finite number: {text:?}") })?;
        }
        set.points.push(Point3::new(c[0], c[1], c[2]));
        set.labels.push(if offset == 1 { fields[0].to_string() } else { (set.points.len()).to_string() });
    }
    if set.points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(set)
}

fn is_header(fields: &[&str]) -> bool {
    let n = fields.len();
    n >= 3 && fields[n - 3..].iter().zip(["x", "y", "z"]).all(|(f, h)| f.eq_ignore_ascii_case(h))
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

/// Header row of labels, then one row of values per point (17 significant
/// digits, failed pairs as `NaN`).
pub fn write_matrix_csv(m: &DistanceMatrix, mut out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(&m.labels).map_err(csv_io)?;
    for row in &m.values {
        w.write_record(row.iter().map(|&v| format_value(v))).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_matrix_csv`]; provenance is not part of the CSV form.
pub fn read_matrix_csv(reader: impl Read, degree: usize) -> Result<DistanceMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let labels: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let vals = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { row, message: format!("not a number: {t:?}") }))
            .collect::<Result<Vec<f64>>>()?;
        values.push(vals);
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    DistanceMatrix::from_values(labels, degree, values)
}

pub fn write_json<T: serde::Serialize>(value: &T, out: impl Write) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_matrix_json(reader: impl Read) -> Result<DistanceMatrix> {
    let m: DistanceMatrix = serde_json::from_reader(reader)?;
    DistanceMatrix::from_values(m.labels.clone(), m.degree, m.values.clone())?;
    Ok(m)
}

/// Reads a matrix in either format, JSON when the first non-blank byte is `{`.
pub fn read_matrix(mut reader: impl Read) -> Result<DistanceMatrix> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    if text.trim_start().starts_with('{') {
        read_matrix_json(text.as_bytes())
    } else {
        read_matrix_csv(text.as_bytes(), 0)
    }
}

/// Plain-text rendering of an audit report.
pub fn audit_table(r: &MetricAuditReport) -> String {
    let ok = |b: bool| if b { "ok" } else { "FAILED" };
    let label = |i: usize| r.labels.get(i).cloned().unwrap_or_else(|| i.to_string());
    let mut s = String::new();
    let _ = writeln!(s, "identity      {}", ok(r.identity_ok));
    let _ = writeln!(s, "symmetry      {}", ok(r.symmetry_ok));
    let _ = writeln!(s, "non-negative  {}", ok(r.nonneg_ok));
    let _ = writeln!(s, "triangle      {} violation(s), tolerance {:e}", r.triangle_violations.len(), r.tolerance);
    if !r.triangle_violations.is_empty() {
        let _ =
            writeln!(s, "{:>6} {:>6} {:>6} {:>18} {:>18} {:>14}", "i", "j", "k", "d(i,k)", "d(i,j)+d(j,k)", "margin");
        for v in &r.triangle_violations {
            let _ = writeln!(
                s,
                "{:>6} {:>6} {:>6} {:>18.10} {:>18.10} {:>14.6e}",
                label(v.i),
                label(v.j),
                label(v.k),
                v.lhs,
                v.rhs,
                v.margin
            );
        }
    }
    s
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("{other:?}")),
    }
}
