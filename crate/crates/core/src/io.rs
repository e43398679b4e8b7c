//! CSV and JSON formats.
//!
//! Floats are written in Rust's shortest round-trip form, so reading back yields bit-identical
//! values.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::InstanceDetection;
use crate::series::{Interval, TimeSeries};
use crate::synthesis::{AnomalyType, DatasetInstance, InstanceGroup};

/// Writes `contents` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn is_time_header(name: &str) -> bool {
    matches!(name.trim().to_ascii_lowercase().as_str(), "time" | "timestamp")
}

/// Reads a headered CSV. A leading time column is recognized by its header (`time` or
/// `timestamp`) or by a first data cell that is not a number; every other column must be numeric.
pub fn read_csv(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }

    let mut records = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        records.push((line, record));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    };
    let has_time =
        is_time_header(&headers[0]) || first.get(0).is_some_and(|c| !c.is_empty() && c.parse::<f64>().is_err());
    let skip = usize::from(has_time);
    let dim = headers.len() - skip;
    if dim == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no numeric columns".into(),
        });
    }

    let mut values = Vec::with_capacity(records.len() * dim);
    let mut timestamps = Vec::new();
    for (row_idx, (line, record)) in records.iter().enumerate() {
        let row = row_idx + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line: *line,
                message: format!("row {row}: expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        if has_time {
            timestamps.push(record[0].to_string());
        }
        for (col, cell) in record.iter().enumerate().skip(skip) {
            if cell.is_empty() {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("row {row}: missing value in column '{}'", &headers[col]),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("row {row}: '{cell}' in column '{}' is not a number", &headers[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("row {row}: non-finite value in column '{}'", &headers[col]),
                });
            }
            values.push(v);
        }
    }
    let series = TimeSeries::new(values, records.len(), dim)?;
    if has_time {
        series.with_timestamps(timestamps)
    } else {
        Ok(series)
    }
}

/// CSV text with a header (`time` first when the series carries timestamps).
pub fn format_csv(series: &TimeSeries, column_names: Option<&[String]>) -> String {
    let mut out = String::new();
    let names: Vec<String> = match column_names {
        Some(n) => n.to_vec(),
        None => (0..series.dim()).map(|d| format!("x{d}")).collect(),
    };
    if series.timestamps().is_some() {
        out.push_str("time,");
    }
    out.push_str(&names.join(","));
    out.push('\n');
    for (t, row) in series.rows().enumerate() {
        if let Some(ts) = series.timestamps() {
            out.push_str(&ts[t]);
            out.push(',');
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalRecord {
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    #[serde(rename = "type")]
    anomaly_type: AnomalyType,
    multivariate: bool,
    values: Vec<Vec<f64>>,
    anomalies: Vec<IntervalRecord>,
    affected_dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetFile {
    seed: u64,
    instances: Vec<InstanceRecord>,
}

/// A generated benchmark together with the seed it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub instances: Vec<DatasetInstance>,
}

pub fn dataset_to_json(dataset: &Dataset) -> Result<String> {
    let file = DatasetFile {
        seed: dataset.seed,
        instances: dataset
            .instances
            .iter()
            .map(|inst| InstanceRecord {
                id: inst.id.clone(),
                anomaly_type: inst.group.anomaly,
                multivariate: inst.group.multivariate,
                values: inst.series.to_rows(),
                anomalies: inst
                    .ground_truth
                    .iter()
                    .map(|g| IntervalRecord {
                        start: g.start,
                        end: g.end,
                    })
                    .collect(),
                affected_dimension: inst.affected_dimension,
            })
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Schema(e.to_string()))
}

pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let mut instances = Vec::with_capacity(file.instances.len());
    for rec in file.instances {
        let series =
            TimeSeries::from_rows(&rec.values).map_err(|e| Error::Schema(format!("instance '{}': {e}", rec.id)))?;
        let mut ground_truth = Vec::with_capacity(rec.anomalies.len());
        for a in &rec.anomalies {
            let iv = Interval::new(a.start, a.end)
                .and_then(|iv| iv.check_within(series.len()).map(|_| iv))
                .map_err(|e| Error::Schema(format!("instance '{}': {e}", rec.id)))?;
            ground_truth.push(iv);
        }
        if rec.affected_dimension >= series.dim() {
            return Err(Error::Schema(format!(
                "instance '{}': affected_dimension {} out of range",
                rec.id, rec.affected_dimension
            )));
        }
        instances.push(DatasetInstance {
            id: rec.id,
            group: InstanceGroup {
                anomaly: rec.anomaly_type,
                multivariate: rec.multivariate,
            },
            series,
            ground_truth,
            affected_dimension: rec.affected_dimension,
        });
    }
    Ok(Dataset {
        seed: file.seed,
        instances,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_json(&fs::read_to_string(path)?)
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    write_atomic(path, dataset_to_json(dataset)?.as_bytes())
}

pub fn detections_to_json(detections: &[InstanceDetection]) -> Result<String> {
    serde_json::to_string_pretty(detections).map_err(|e| Error::Schema(e.to_string()))
}

pub fn detections_from_json(text: &str) -> Result<Vec<InstanceDetection>> {
    let dets: Vec<InstanceDetection> = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    if let Some(bad) = dets.iter().find(|d| d.end <= d.start || !d.score.is_finite()) {
        return Err(Error::Schema(format!(
            "invalid detection [{}, {}) for instance '{}'",
            bad.start, bad.end, bad.instance
        )));
    }
    Ok(dets)
}

pub fn read_detections(path: &Path) -> Result<Vec<InstanceDetection>> {
    detections_from_json(&fs::read_to_string(path)?)
}
