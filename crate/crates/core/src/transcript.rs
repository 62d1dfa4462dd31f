//! CSV transcripts of a run, one row per step.
//!
//! Magnitudes are written as decimal scientific notation with 17 significant
//! digits; they routinely lie far outside the `f64` range.

use std::fs;
use std::path::Path;

use crate::error::{KamError, Result};
use crate::kam::StepReport;
use crate::mag::Mag;

pub const HEADER: [&str; 17] = [
    "n",
    "s_n",
    "rho_n",
    "sigma_n",
    "eps_n",
    "norm_alpha",
    "norm_beta",
    "norm_gamma",
    "N1_u",
    "nu",
    "bound_i",
    "bound_ii",
    "bound_iii",
    "bound_star",
    "bound_A",
    "bound_B",
    "bound_C",
];

/// The transcript fields of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptRow {
    pub n: usize,
    /// `s_n`, `rho_n`, `sigma_n`, `eps_n`, `|alpha_n|`, `|beta_n|`, `|gamma_n|`, `N^1(u_n)`, `nu_n`.
    pub values: [Mag; 9],
    /// Bounds i, ii, iii, star, A, B, C.
    pub bounds: [bool; 7],
}

impl TranscriptRow {
    pub fn all_bounds_hold(&self) -> bool {
        self.bounds.iter().all(|&b| b)
    }
}

impl From<&StepReport> for TranscriptRow {
    fn from(r: &StepReport) -> Self {
        let b = r.bounds;
        Self {
            n: r.n,
            values: [
                r.s_n.mag(),
                r.rho_n,
                r.sigma_n,
                r.eps_n,
                r.norm_alpha,
                r.norm_beta,
                r.norm_gamma,
                r.n1_u,
                r.nu,
            ],
            bounds: [b.i, b.ii, b.iii, b.star, b.a, b.b, b.c],
        }
    }
}

pub fn to_csv(rows: &[TranscriptRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| KamError::Io(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        let mut record = vec![row.n.to_string()];
        record.extend(row.values.iter().map(|v| v.to_sci()));
        record.extend(row.bounds.iter().map(|b| b.to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| KamError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| KamError::Io(e.to_string()))
}

/// Write the transcript of a run; refuses an empty one.
pub fn write_transcript(reports: &[StepReport], path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(KamError::Contract("empty transcript".into()));
    }
    let rows: Vec<TranscriptRow> = reports.iter().map(TranscriptRow::from).collect();
    fs::write(path, to_csv(&rows)?)?;
    Ok(())
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| KamError::Io(e.to_string()))?;
    if header.iter().ne(HEADER) {
        return Err(KamError::Io(format!("unexpected header {header:?}")));
    }
    let bad = |what: &str, line: usize| KamError::Io(format!("bad {what} on data row {line}"));
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| KamError::Io(e.to_string()))?;
        let n = record[0].parse().map_err(|_| bad("step index", line))?;
        let mut values = [Mag::ZERO; 9];
        for (i, v) in values.iter_mut().enumerate() {
            *v = Mag::parse_sci(&record[i + 1]).ok_or_else(|| bad(HEADER[i + 1], line))?;
        }
        let mut bounds = [false; 7];
        for (i, b) in bounds.iter_mut().enumerate() {
            *b = record[i + 10].parse().map_err(|_| bad(HEADER[i + 10], line))?;
        }
        rows.push(TranscriptRow { n, values, bounds });
    }
    Ok(rows)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRow>> {
    parse_transcript(&fs::read_to_string(path)?)
}
