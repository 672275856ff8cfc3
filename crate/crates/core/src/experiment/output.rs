//! Result files: `result.json`, `curves.csv` and `filtration.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentResult;
use crate::error::{Error, Result};

pub const RESULT_FILE: &str = "result.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const FILTRATION_FILE: &str = "filtration.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: u64,
    pub em1: f64,
    pub em1_annotation: f64,
    pub best_cumulative: f64,
    pub unlabeled: usize,
    pub labeled: usize,
    pub queue: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationCsvRow {
    pub epoch: u64,
    pub flagged: usize,
    /// Empty when the data carries no ground truth.
    pub correct_rate: Option<f64>,
    pub false_rate: Option<f64>,
    pub hit: usize,
    pub resolved: usize,
    pub manual_replaced: usize,
    pub unchanged: usize,
}

pub fn curve_rows(result: &ExperimentResult) -> Vec<CurveRow> {
    result
        .logs
        .iter()
        .zip(&result.best_cumulative)
        .map(|(l, &best)| CurveRow {
            epoch: l.epoch,
            em1: l.em1,
            em1_annotation: l.em1_annotation,
            best_cumulative: best,
            unlabeled: l.pool_sizes.unlabeled,
            labeled: l.pool_sizes.labeled,
            queue: l.pool_sizes.queue,
        })
        .collect()
}

/// One row per reannotation epoch.
pub fn filtration_rows(result: &ExperimentResult) -> Vec<FiltrationCsvRow> {
    result
        .logs
        .iter()
        .filter(|l| l.reannotated)
        .map(|l| {
            let rates = result
                .filtration
                .as_ref()
                .and_then(|rows| rows.iter().find(|r| r.epoch == l.epoch));
            FiltrationCsvRow {
                epoch: l.epoch,
                flagged: l.flagged_count,
                correct_rate: rates.map(|r| r.correct_rate),
                false_rate: rates.map(|r| r.false_rate),
                hit: l.outcome_counts.hit,
                resolved: l.outcome_counts.resolved,
                manual_replaced: l.outcome_counts.manual_replaced,
                unchanged: l.outcome_counts.unchanged,
            }
        })
        .collect()
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T], headers: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    if rows.is_empty() {
        w.write_record(headers)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header plus rows of preformatted cells.
pub(crate) fn write_csv_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

pub fn result_json(result: &ExperimentResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)? + "\n")
}

/// Writes the three result files into `dir`, creating it if needed, and
/// returns their paths.
pub fn write_outputs(dir: impl AsRef<Path>, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join(RESULT_FILE);
    fs::write(&json, result_json(result)?).map_err(|e| Error::io(&json, e))?;
    let curves = dir.join(CURVES_FILE);
    write_csv(
        &curves,
        &curve_rows(result),
        &["epoch", "em1", "em1_annotation", "best_cumulative", "unlabeled", "labeled", "queue"],
    )?;
    let filtration = dir.join(FILTRATION_FILE);
    write_csv(
        &filtration,
        &filtration_rows(result),
        &[
            "epoch",
            "flagged",
            "correct_rate",
            "false_rate",
            "hit",
            "resolved",
            "manual_replaced",
            "unchanged",
        ],
    )?;
    Ok(vec![json, curves, filtration])
}

pub fn read_result(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
