use std::fs;
use std::io::Write;
use std::path::Path;

use liftsvd_core::lift::{Decomposition, LiftedPoint};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// On-disk form of a decomposition. `ordering[i]` is the 0-based component
/// placed `i`-th; `U[j]` is the column holding the 1 in row `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub sigma: Vec<f64>,
    pub eta: f64,
    pub m: usize,
    pub ordering: Vec<usize>,
    #[serde(rename = "U")]
    pub u: Vec<usize>,
}

impl DecompositionRecord {
    pub fn from_decomposition(dec: &Decomposition) -> Self {
        let s = dec.sigma_spec();
        DecompositionRecord {
            sigma: s.sigma().to_vec(),
            eta: s.eta(),
            m: dec.m(),
            ordering: s.ordering().perm().to_vec(),
            u: dec.u_index(),
        }
    }
}

/// Pretty JSON with a trailing newline. Output depends only on `value`.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn lifted_points_header(n: usize, p: usize, m: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    h.extend((1..=p).map(|i| format!("delta_{i}")));
    h.extend((1..=m).map(|i| format!("v_{i}")));
    h.push("S".into());
    h
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_lifted_points_csv<W: Write>(out: W, n: usize, p: usize, m: usize, points: &[LiftedPoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(lifted_points_header(n, p, m))?;
    for lp in points {
        let row = lp.x.iter().chain(&lp.delta).chain(&lp.v).chain(std::iter::once(&lp.s)).map(|v| fmt(*v));
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes rows of plain vectors under a fixed header.
pub fn write_vectors_csv<W: Write>(out: W, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt(*v)))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes rows that may contain undefined cells, emitted as empty strings.
pub fn write_optional_csv<W: Write>(out: W, header: &[&str], rows: &[Vec<Option<f64>>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt_opt(*v)))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}
