//! CSV readers and writers: raw tables, synthetic sets, histories, optimiser
//! traces and the results table. An empty cell means "missing".

use std::path::Path;

use btm_core::bezier::OptTrace;
use btm_core::condense::{HistoryRow, SyntheticDataset};
use btm_core::data::RawTable;
use btm_core::eval::MetricSummary;
use btm_core::Matrix;

use crate::atomic::write_atomic;
use crate::error::{BtmError, Result};

fn csv_err(path: &Path, e: csv::Error) -> BtmError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BtmError::io(path, io),
        other => BtmError::format(path, format!("{other:?}")),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| BtmError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| BtmError::format(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => String::new(),
    }
}

/// Reads a table with a header row. `label_column` must hold 0/1; every other
/// column is a numeric feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<RawTable> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| BtmError::format(path, format!("no label column `{label_column}`")))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        // Row numbers are 1-based and count the header.
        let line = r + 2;
        let mut row = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if c == label_idx {
                let y = match cell {
                    "0" | "0.0" => 0,
                    "1" | "1.0" => 1,
                    _ => {
                        return Err(BtmError::format(
                            path,
                            format!("row {line}, column `{}`: label `{cell}` is not 0 or 1", &header[c]),
                        ))
                    }
                };
                labels.push(y);
            } else if cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    BtmError::format(path, format!("row {line}, column `{}`: `{cell}` is not a number", &header[c]))
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }
    RawTable::new(feature_names, rows, labels).map_err(|e| BtmError::format(path, e.to_string()))
}

pub fn write_raw_csv(path: &Path, table: &RawTable, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = table.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (row, &y) in table.rows.iter().zip(&table.labels) {
        let mut rec: Vec<String> = row.iter().map(|c| fmt_opt(*c)).collect();
        rec.push(y.to_string());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Writes a synthetic set: one row per example, features then `label`.
pub fn write_synthetic_csv(path: &Path, synth: &SyntheticDataset, feature_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = feature_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..synth.len() {
        let mut rec: Vec<String> = synth.inputs.row(i).iter().map(|v| v.to_string()).collect();
        rec.push((synth.labels[i] as u8).to_string());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn read_synthetic_csv(path: &Path, eta_s: f64) -> Result<SyntheticDataset> {
    let table = load_csv(path, "label")?;
    if table.missing_count() > 0 {
        return Err(BtmError::format(path, "synthetic set has missing cells"));
    }
    let d = table.feature_names.len();
    let data: Vec<f64> = table.rows.iter().flatten().map(|c| c.unwrap_or(0.0)).collect();
    let inputs = Matrix::from_vec(table.len(), d, data).map_err(|e| BtmError::format(path, e.to_string()))?;
    let labels = table.labels.iter().map(|&y| f64::from(y)).collect();
    SyntheticDataset::new(inputs, labels, eta_s).map_err(|e| BtmError::format(path, e.to_string()))
}

pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "l_btm", "eta_s", "val_auroc", "val_auprc"])
        .map_err(|e| csv_err(path, e))?;
    for row in history {
        w.write_record([
            row.iteration.to_string(),
            fmt_opt(Some(row.matching_loss)),
            row.eta_s.to_string(),
            fmt_opt(row.val_auroc),
            fmt_opt(row.val_auprc),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

pub fn write_trace_csv(path: &Path, trace: &OptTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "loss", "grad_norm"]).map_err(|e| csv_err(path, e))?;
    for s in &trace.steps {
        w.write_record([s.iteration.to_string(), s.loss.to_string(), s.grad_norm.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub method: String,
    /// Examples per class, or `all` for the full training split.
    pub ipc: String,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
}

impl ResultRow {
    pub fn new(method: &str, ipc: Option<usize>, summary: &MetricSummary) -> Self {
        Self {
            method: method.to_string(),
            ipc: ipc.map_or_else(|| "all".to_string(), |k| k.to_string()),
            auroc_mean: summary.auroc_mean,
            auroc_std: summary.auroc_std,
            auprc_mean: summary.auprc_mean,
            auprc_std: summary.auprc_std,
        }
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = open_reader(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_err(path, e)))
        .collect()
}

/// Inserts `row`, replacing any existing row with the same method and ipc.
/// Rows keep first-insertion order.
pub fn upsert_result(path: &Path, row: ResultRow) -> Result<()> {
    let mut rows = if path.exists() { read_results(path)? } else { Vec::new() };
    match rows.iter_mut().find(|r| r.method == row.method && r.ipc == row.ipc) {
        Some(existing) => *existing = row,
        None => rows.push(row),
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}
