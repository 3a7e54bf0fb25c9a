//! Run-table ingestion and emission.
//!
//! The CSV form has the exact header
//! `family,pattern,sparsity,nonzero_params,data,loss`; the JSON form is an
//! array of objects with the same six keys. Both map onto a
//! [`SweepDataset`] whose family is the (single) family of all rows.

use std::io::{Read, Write};

use serde_json::Value;
use sparselaw::fitting::FitResult;
use sparselaw::{DataUnit, RunRecord, SweepDataset};
use thiserror::Error;

use crate::format::num;

pub const HEADER: [&str; 6] = ["family", "pattern", "sparsity", "nonzero_params", "data", "loss"];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("run table has no rows")]
    EmptyTable,

    #[error("line {line}: family {found:?} differs from {expected:?} on earlier rows")]
    MixedFamily { line: u64, expected: String, found: String },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("header must be exactly {expected}, got {found}")]
    HeaderOrder { expected: String, found: String },

    #[error("unreadable run table: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid JSON run table: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl TableError {
    pub fn kind(&self) -> &'static str {
        match self {
            TableError::MalformedRow { .. } => "malformed-row",
            TableError::EmptyTable => "empty-table",
            TableError::MixedFamily { .. } => "mixed-family",
            TableError::UnknownColumn(_) | TableError::MissingColumn(_) | TableError::HeaderOrder { .. } => {
                "named-column"
            }
            TableError::Io(_) => "io",
            TableError::Json(_) | TableError::Csv(_) => "malformed-table",
        }
    }
}

struct Row {
    line: u64,
    family: String,
    record: RunRecord,
}

fn check_columns<'a>(names: impl IntoIterator<Item = &'a str> + Clone) -> Result<(), TableError> {
    for name in names.clone() {
        if !HEADER.contains(&name) {
            return Err(TableError::UnknownColumn(name.to_string()));
        }
    }
    for want in HEADER {
        if !names.clone().into_iter().any(|n| n == want) {
            return Err(TableError::MissingColumn(want.to_string()));
        }
    }
    Ok(())
}

fn parse_number(line: u64, column: &str, text: &str) -> Result<f64, TableError> {
    text.trim().parse::<f64>().map_err(|_| TableError::MalformedRow {
        line,
        message: format!("column {column}: {text:?} is not a number"),
    })
}

fn build_record(line: u64, fields: [f64; 4], pattern: &str) -> Result<RunRecord, TableError> {
    let [sparsity, nonzero_params, data, loss] = fields;
    RunRecord::new(sparsity, nonzero_params, data, loss, pattern).map_err(|e| TableError::MalformedRow {
        line,
        message: e.to_string(),
    })
}

fn parse_csv(text: &str) -> Result<Vec<Row>, TableError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    check_columns(header.iter().map(String::as_str))?;
    if header != HEADER {
        return Err(TableError::HeaderOrder {
            expected: HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for result in reader.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            TableError::MalformedRow { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let numbers = [
            parse_number(line, "sparsity", &rec[2])?,
            parse_number(line, "nonzero_params", &rec[3])?,
            parse_number(line, "data", &rec[4])?,
            parse_number(line, "loss", &rec[5])?,
        ];
        rows.push(Row {
            line,
            family: rec[0].trim().to_string(),
            record: build_record(line, numbers, rec[1].trim())?,
        });
    }
    Ok(rows)
}

fn parse_json(text: &str) -> Result<Vec<Row>, TableError> {
    let items: Vec<serde_json::Map<String, Value>> = serde_json::from_str(text)?;
    items
        .into_iter()
        .enumerate()
        .map(|(i, obj)| {
            // rows are numbered from 1, like CSV data lines after the header
            let line = i as u64 + 1;
            check_columns(obj.keys().map(String::as_str))?;
            let text_field = |key: &str| -> Result<String, TableError> {
                obj[key].as_str().map(str::to_string).ok_or_else(|| TableError::MalformedRow {
                    line,
                    message: format!("column {key}: expected a string"),
                })
            };
            let number = |key: &str| -> Result<f64, TableError> {
                obj[key].as_f64().ok_or_else(|| TableError::MalformedRow {
                    line,
                    message: format!("column {key}: expected a number"),
                })
            };
            let numbers = [number("sparsity")?, number("nonzero_params")?, number("data")?, number("loss")?];
            Ok(Row {
                line,
                family: text_field("family")?,
                record: build_record(line, numbers, &text_field("pattern")?)?,
            })
        })
        .collect()
}

/// Parses a CSV or JSON run table (JSON when the first non-blank character
/// is `[`).
pub fn parse_run_table(mut input: impl Read) -> Result<SweepDataset, TableError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let rows = if text.trim_start().starts_with('[') {
        parse_json(text)?
    } else if text.trim().is_empty() {
        return Err(TableError::EmptyTable);
    } else {
        parse_csv(text)?
    };
    let first = rows.first().ok_or(TableError::EmptyTable)?;
    let family = first.family.clone();
    if let Some(bad) = rows.iter().find(|r| r.family != family) {
        return Err(TableError::MixedFamily {
            line: bad.line,
            expected: family,
            found: bad.family.clone(),
        });
    }
    let unit = DataUnit::for_family(&family);
    let records = rows.into_iter().map(|r| r.record).collect();
    SweepDataset::new(records, family, unit).map_err(|e| TableError::MalformedRow {
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_run_table(data: &SweepDataset, out: impl Write) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in &data.records {
        w.write_record([
            data.family.clone(),
            r.pattern.clone(),
            num(r.sparsity),
            num(r.nonzero_params),
            num(r.data),
            num(r.loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run_table_json(data: &SweepDataset, mut out: impl Write) -> Result<(), TableError> {
    let rows: Vec<Value> = data
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "family": data.family,
                "pattern": r.pattern,
                "sparsity": r.sparsity,
                "nonzero_params": r.nonzero_params,
                "data": r.data,
                "loss": r.loss,
            })
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &rows)?;
    writeln!(out)?;
    Ok(())
}

/// Run table with an extra `residual` column from a fit.
pub fn write_residuals(data: &SweepDataset, fit: &FitResult, out: impl Write) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = HEADER.to_vec();
    header.push("residual");
    w.write_record(&header)?;
    for (r, res) in data.records.iter().zip(&fit.residuals) {
        w.write_record([
            data.family.clone(),
            r.pattern.clone(),
            num(r.sparsity),
            num(r.nonzero_params),
            num(r.data),
            num(r.loss),
            num(*res),
        ])?;
    }
    w.flush()?;
    Ok(())
}
