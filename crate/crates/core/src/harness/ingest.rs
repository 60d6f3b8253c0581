use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which CSV columns to read and how to cut them into observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesSchema {
    pub timestamp: String,
    /// Numeric columns; each observation is step-major over these.
    pub columns: Vec<String>,
    pub horizon: usize,
    /// Windows starting before this date are training data.
    pub train_end: Option<NaiveDate>,
    /// Windows starting before this date (and after `train_end`) are
    /// validation data; the rest are test data.
    pub validation_end: Option<NaiveDate>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDateTime,
    pub split: Split,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub columns: Vec<String>,
    pub horizon: usize,
    pub windows: Vec<Window>,
}

impl ObservationSet {
    pub fn dim(&self) -> usize {
        self.horizon * self.columns.len()
    }

    pub fn split(&self, split: Split) -> Vec<Vec<f64>> {
        self.windows
            .iter()
            .filter(|w| w.split == split)
            .map(|w| w.values.clone())
            .collect()
    }

    pub fn all(&self) -> Vec<Vec<f64>> {
        self.windows.iter().map(|w| w.values.clone()).collect()
    }
}

fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(text) {
        return Some(t.naive_utc());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Reads a timestamped CSV and cuts it into non-overlapping windows of
/// `horizon` rows; a trailing partial window is dropped.
pub fn ingest_timeseries(path: &Path, schema: &TimeseriesSchema) -> Result<ObservationSet> {
    if schema.horizon == 0 || schema.columns.is_empty() {
        return Err(Error::Config("horizon and columns must be nonempty".into()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("column `{name}` not found")))
    };
    let ts_col = find(&schema.timestamp)?;
    let value_cols: Vec<usize> = schema.columns.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut stamps = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let raw = record.get(ts_col).unwrap_or("");
        let stamp = parse_timestamp(raw).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad timestamp `{raw}`"),
        })?;
        if let Some(prev) = stamps.last() {
            if stamp <= *prev {
                return Err(Error::Parse {
                    line,
                    message: format!("timestamp {stamp} does not increase"),
                });
            }
        }
        let mut values = Vec::with_capacity(value_cols.len());
        for (&c, name) in value_cols.iter().zip(&schema.columns) {
            let cell = record.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column `{name}`: missing or non-numeric value `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column `{name}`: non-finite value"),
                });
            }
            values.push(v);
        }
        stamps.push(stamp);
        rows.push(values);
    }

    let windows = rows
        .chunks_exact(schema.horizon)
        .zip(stamps.chunks_exact(schema.horizon))
        .map(|(chunk, ts)| {
            let start = ts[0];
            let date = start.date();
            let split = match (schema.train_end, schema.validation_end) {
                (Some(t), _) if date < t => Split::Train,
                (_, Some(v)) if date < v => Split::Validation,
                (None, None) => Split::Train,
                _ => Split::Test,
            };
            Window {
                start,
                split,
                values: chunk.iter().flatten().cloned().collect(),
            }
        })
        .collect();
    Ok(ObservationSet {
        columns: schema.columns.clone(),
        horizon: schema.horizon,
        windows,
    })
}

/// Writes `rows` as a time series with a `timestamp` column followed by
/// `columns`, one row every `step` from `start`.
pub fn write_timeseries(
    path: &Path,
    columns: &[String],
    rows: &[Vec<f64>],
    start: NaiveDateTime,
    step: chrono::Duration,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("timestamp").chain(columns.iter().map(String::as_str)))?;
    for (k, row) in rows.iter().enumerate() {
        Error::check_dim(columns.len(), row.len())?;
        let t = start + step * k as i32;
        let mut record = vec![t.format("%Y-%m-%d %H:%M:%S").to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// One observation per row, columns `o_0, o_1, ...`.
pub fn write_observations(path: &Path, observations: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = observations.first().map_or(0, |o| o.len());
    w.write_record((0..dim).map(|k| format!("o_{k}")))?;
    for o in observations {
        Error::check_dim(dim, o.len())?;
        w.write_record(o.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric value `{c}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}
