//! Run output: one row per held-out instance with its estimated
//! positive-class probability, plus the squared-error summaries
//! computed from those rows.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One held-out instance from one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub target_rate: f64,
    pub id: u64,
    pub label: i8,
    pub probability: f64,
}

/// Which rows enter a summary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    Positives,
    Negatives,
}

impl ClassFilter {
    pub fn keeps(self, label: i8) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Positives => label == 1,
            ClassFilter::Negatives => label == -1,
        }
    }
}

/// Mean squared error between the probability and the class indicator
/// (1 for the positive class, 0 otherwise), over the filtered rows.
pub fn mean_squared_error(rows: &[ReportRow], filter: ClassFilter) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for row in rows {
        if !filter.keeps(row.label) {
            continue;
        }
        let target = if row.label == 1 { 1.0 } else { 0.0 };
        let diff = target - row.probability;
        sum += diff * diff;
        n += 1;
    }
    if n == 0 {
        return Err(Error::MetricUndefined {
            metric: "mse".into(),
            message: format!("no rows match {filter:?}"),
        });
    }
    Ok(sum / n as f64)
}

/// Median of a sample; even lengths take the midpoint.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite median input"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some(0.5 * (sorted[mid - 1] + sorted[mid]))
    }
}

/// Writes rows as CSV with a header. Floats use the shortest
/// representation that parses back to the same value, so a repeated
/// run writes a byte-identical file.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}
