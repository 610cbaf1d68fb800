//! Plain CSV/JSON input and output.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use robust_t::Dataset64;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Reads an `n × p` numeric matrix. A first row made entirely of
/// non-numeric cells is taken as a header and skipped.
pub fn read_dataset(path: &Path) -> Result<Dataset64> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_dataset_from(file).with_context(|| format!("reading {}", path.display()))
}

pub fn read_dataset_from(reader: impl io::Read) -> Result<Dataset64> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut p = None;
    let mut flat = Vec::new();
    let mut first = true;
    for record in rdr.records() {
        let record = record.context("malformed CSV")?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if first {
            first = false;
            if record.iter().all(|c| parse_cell(c).is_none()) {
                continue;
            }
        }
        let width = *p.get_or_insert(record.len());
        if record.len() != width {
            bail!("row {line}: expected {width} columns, found {}", record.len());
        }
        for (col, cell) in record.iter().enumerate() {
            let v = parse_cell(cell)
                .ok_or_else(|| anyhow!("row {line}, column {}: '{cell}' is not a number", col + 1))?;
            if !v.is_finite() {
                bail!("row {line}, column {}: non-finite value '{cell}'", col + 1);
            }
            flat.push(v);
        }
    }
    let p = p.ok_or_else(|| anyhow!("no observations"))?;
    Ok(Dataset64::from_flat(p, flat)?)
}

/// `"2,1"` → `[2.0, 1.0]`.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| parse_cell(t).ok_or_else(|| anyhow!("'{}' is not a number", t.trim())))
        .collect()
}

/// `"1,0;0,1"` → rows of a square matrix.
pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_vector).collect::<Result<_>>()?;
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        bail!("matrix '{s}' is not square");
    }
    Ok(rows)
}

/// `"lo:hi"`.
pub fn parse_range(s: &str) -> Result<(f64, f64)> {
    match parse_colon(s)?.as_slice() {
        &[lo, hi] if lo <= hi => Ok((lo, hi)),
        _ => bail!("invalid range '{s}', expected lo:hi with lo <= hi"),
    }
}

/// `"lo:hi:step"`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    match parse_colon(s)?.as_slice() {
        &[lo, hi, step] => Ok(robust_t::simulation::q_grid(lo, hi, step)?),
        _ => bail!("invalid grid '{s}', expected lo:hi:step"),
    }
}

fn parse_colon(s: &str) -> Result<Vec<f64>> {
    s.split(':')
        .map(|t| parse_cell(t).filter(|v| v.is_finite()).ok_or_else(|| anyhow!("'{}' is not a number", t.trim())))
        .collect()
}

/// File when a path is given, stdout otherwise.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_csv<I>(path: Option<&Path>, header: Option<&[String]>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().flexible(false).from_writer(sink(path)?);
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: Option<&Path>, data: &Dataset64) -> Result<()> {
    write_csv(path, None, data.rows().map(|r| r.iter().map(|&v| fmt17(v)).collect()))
}
