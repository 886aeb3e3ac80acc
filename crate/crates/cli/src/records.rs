//! Experiment records and their CSV / JSON forms.

use std::io::{Read, Write};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// One `(N, metric)` result. Floats are written in shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub sequence: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub metric: String,
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub t_star: Option<f64>,
    pub tail: Option<f64>,
    pub cutoff: Option<usize>,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

pub const HEADER: [&str; 12] = [
    "sequence",
    "d",
    "N",
    "metric",
    "value",
    "lower",
    "upper",
    "t_star",
    "tail",
    "cutoff",
    "wall_time_ms",
    "error",
];

/// CSV rows with a header even when there are none, or a JSON array.
pub fn write_rows<T: Serialize, W: Write>(rows: &[T], header: &[&str], format: Format, mut w: W) -> anyhow::Result<()> {
    match format {
        Format::Csv => {
            let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(&mut w);
            out.write_record(header)?;
            for r in rows {
                out.serialize(r)?;
            }
            out.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Reads either form; a JSON file starts with `[`. Unparseable rows are
/// returned as messages instead of aborting the read.
pub fn read_records<R: Read>(mut r: R) -> anyhow::Result<(Vec<ExperimentRecord>, Vec<String>)> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    if text.trim_start().starts_with('[') {
        let rows: Vec<ExperimentRecord> = serde_json::from_str(&text)?;
        return Ok((rows, Vec::new()));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, row) in reader.deserialize::<ExperimentRecord>().enumerate() {
        match row {
            Ok(rec) => rows.push(rec),
            Err(e) => failures.push(format!("row {}: {e}", i + 2)),
        }
    }
    Ok((rows, failures))
}
