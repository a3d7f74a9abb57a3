//! Manifest and metric-matrix CSV files.
//!
//! Both are UTF-8, comma separated, with a header row. Detector verdicts live
//! in `label_<detector>` columns. Floats are written in Rust's shortest
//! round-trip decimal form.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forest::SampleRecord;
use crate::metrics::MetricName;

pub const LABEL_PREFIX: &str = "label_";

const MANIFEST_FIXED: [&str; 5] = [
    "pair_id",
    "original_path",
    "adversarial_path",
    "attack_family",
    "config_id",
];
const MATRIX_FIXED: [&str; 3] = ["pair_id", "attack_family", "config_id"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub pair_id: String,
    pub original_path: PathBuf,
    pub adversarial_path: PathBuf,
    pub attack_family: String,
    pub config_id: String,
    pub labels: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrixRow {
    pub pair_id: String,
    pub attack_family: String,
    pub config_id: String,
    /// Values in [`MetricName::ALL`] order, all finite.
    pub metrics: [f64; 12],
    pub labels: BTreeMap<String, u8>,
}

impl MetricMatrixRow {
    pub fn to_record(&self) -> SampleRecord {
        SampleRecord {
            sample_id: self.pair_id.clone(),
            attack_family: self.attack_family.clone(),
            config_id: self.config_id.clone(),
            features: MetricName::ALL
                .iter()
                .zip(self.metrics)
                .map(|(m, v)| (m.as_str().to_string(), v))
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Accepts either `magnet` or `label_magnet`.
pub fn detector_name(label: &str) -> &str {
    label.strip_prefix(LABEL_PREFIX).unwrap_or(label)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    if let Some(dup) = headers.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(Error::Parse(format!(
            "{}: duplicate column `{dup}`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(rec.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok(Table { headers, rows })
}

fn column(headers: &[String], name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("{}: missing column `{name}`", path.display())))
}

fn label_columns(headers: &[String]) -> Vec<(usize, String)> {
    headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix(LABEL_PREFIX).map(|d| (i, d.to_string())))
        .collect()
}

fn parse_label(field: &str, line: usize, path: &Path) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse(format!(
            "{}:{line}: label `{other}` is not 0 or 1",
            path.display()
        ))),
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, path: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Parse(format!(
                "{}: duplicate pair_id `{id}`",
                path.display()
            )));
        }
    }
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let idx: Vec<usize> = MANIFEST_FIXED
        .iter()
        .map(|c| column(&table.headers, c, path))
        .collect::<Result<_>>()?;
    let labels = label_columns(&table.headers);
    if labels.is_empty() {
        return Err(Error::Parse(format!(
            "{}: no `{LABEL_PREFIX}<detector>` column",
            path.display()
        )));
    }
    let mut out = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let mut label_map = BTreeMap::new();
        for (col, name) in &labels {
            label_map.insert(name.clone(), parse_label(&row[*col], line, path)?);
        }
        out.push(ManifestRow {
            pair_id: row[idx[0]].clone(),
            original_path: PathBuf::from(&row[idx[1]]),
            adversarial_path: PathBuf::from(&row[idx[2]]),
            attack_family: row[idx[3]].clone(),
            config_id: row[idx[4]].clone(),
            labels: label_map,
        });
    }
    check_unique(out.iter().map(|r| r.pair_id.as_str()), path)?;
    Ok(out)
}

fn detectors<'a>(labels: impl Iterator<Item = &'a BTreeMap<String, u8>>) -> Vec<String> {
    labels
        .flat_map(|m| m.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn write_table(path: &Path, headers: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    writer.write_record(headers).map_err(|e| csv_err(path, e))?;
    for row in rows {
        writer.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn label_fields(labels: &BTreeMap<String, u8>, detectors: &[String]) -> Result<Vec<String>> {
    detectors
        .iter()
        .map(|d| {
            labels
                .get(d)
                .map(|l| l.to_string())
                .ok_or_else(|| Error::UnknownLabel(d.clone()))
        })
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let dets = detectors(rows.iter().map(|r| &r.labels));
    let mut headers: Vec<String> = MANIFEST_FIXED.iter().map(|s| s.to_string()).collect();
    headers.extend(dets.iter().map(|d| format!("{LABEL_PREFIX}{d}")));
    let body = rows
        .iter()
        .map(|r| {
            let mut fields = vec![
                r.pair_id.clone(),
                r.original_path.to_string_lossy().into_owned(),
                r.adversarial_path.to_string_lossy().into_owned(),
                r.attack_family.clone(),
                r.config_id.clone(),
            ];
            fields.extend(label_fields(&r.labels, &dets)?);
            Ok(fields)
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(path, &headers, &body)
}

pub fn write_matrix(path: impl AsRef<Path>, rows: &[MetricMatrixRow]) -> Result<()> {
    let path = path.as_ref();
    let dets = detectors(rows.iter().map(|r| &r.labels));
    let mut headers: Vec<String> = MATRIX_FIXED.iter().map(|s| s.to_string()).collect();
    headers.extend(MetricName::ALL.iter().map(|m| m.as_str().to_string()));
    headers.extend(dets.iter().map(|d| format!("{LABEL_PREFIX}{d}")));
    let body = rows
        .iter()
        .map(|r| {
            let mut fields = vec![r.pair_id.clone(), r.attack_family.clone(), r.config_id.clone()];
            for (m, v) in MetricName::ALL.iter().zip(r.metrics) {
                if !v.is_finite() {
                    return Err(Error::DegenerateInput(format!(
                        "{}: metric {m} is not finite",
                        r.pair_id
                    )));
                }
                fields.push(v.to_string());
            }
            fields.extend(label_fields(&r.labels, &dets)?);
            Ok(fields)
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(path, &headers, &body)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Vec<MetricMatrixRow>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let fixed: Vec<usize> = MATRIX_FIXED
        .iter()
        .map(|c| column(&table.headers, c, path))
        .collect::<Result<_>>()?;
    let metric_cols: Vec<usize> = MetricName::ALL
        .iter()
        .map(|m| column(&table.headers, m.as_str(), path))
        .collect::<Result<_>>()?;
    let labels = label_columns(&table.headers);
    let mut out = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let mut metrics = [0.0; 12];
        for ((slot, &col), m) in metrics.iter_mut().zip(&metric_cols).zip(MetricName::ALL) {
            let v: f64 = row[col].parse().map_err(|_| {
                Error::Parse(format!(
                    "{}:{line}: {m} value `{}` is not a number",
                    path.display(),
                    row[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "{}:{line}: {m} value is not finite",
                    path.display()
                )));
            }
            *slot = v;
        }
        let mut label_map = BTreeMap::new();
        for (col, name) in &labels {
            label_map.insert(name.clone(), parse_label(&row[*col], line, path)?);
        }
        out.push(MetricMatrixRow {
            pair_id: row[fixed[0]].clone(),
            attack_family: row[fixed[1]].clone(),
            config_id: row[fixed[2]].clone(),
            metrics,
            labels: label_map,
        });
    }
    check_unique(out.iter().map(|r| r.pair_id.as_str()), path)?;
    Ok(out)
}

/// Runs `write` against a sibling temporary path and renames the result into
/// place, so `path` is either the complete new file or untouched.
pub(crate) fn write_atomically(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.partial"));
    match write(&tmp) {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}
