//! On-disk layout for a trained bank: everything needed to calibrate
//! thresholds or score new rows later, reloadable bit-exact.
//!
//! ```text
//! dir/
//!   manifest.toml    version, seed, grid, replicate count, feature names
//!   transform.toml   fitted preprocessing
//!   train.csv        id, label, preprocessed feature columns
//!   acc.csv          per-replicate status, seed, attempts, accuracy
//!   oob.csv          out-of-bag row memberships
//!   models/theta_JJ/b_BBBB.model
//! ```
//!
//! Text floats use the shortest representation that parses back to the
//! same bits, and models are fixed-layout binary, so save then load is
//! an identity and repeated saves are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::ensemble::{EnsembleBank, ParameterGrid, Replicate, ReplicateStatus};
use crate::error::{Error, Result};
use crate::model_io::{read_model, write_model};
use crate::preprocess::FittedTransform;

const BANK_VERSION: u32 = 1;

/// A bank with the context it was trained in.
#[derive(Clone, Debug)]
pub struct SavedBank {
    pub bank: EnsembleBank,
    pub transform: FittedTransform,
    /// Preprocessed training matrix the replicates were drawn from.
    pub features: Features,
    pub labels: Vec<i8>,
    pub ids: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct BankManifest {
    version: u32,
    seed: u64,
    n_replicates: usize,
    grid: Vec<f64>,
    features: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AccRow {
    theta: usize,
    replicate: usize,
    status: String,
    seed: u64,
    attempts: u32,
    accuracy: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct OobRow {
    theta: usize,
    replicate: usize,
    row: usize,
}

fn bank_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Bank {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn status_name(status: ReplicateStatus) -> &'static str {
    match status {
        ReplicateStatus::Trained => "trained",
        ReplicateStatus::EmptyOob => "empty_oob",
        ReplicateStatus::Failed => "failed",
    }
}

fn parse_status(name: &str, path: &Path) -> Result<ReplicateStatus> {
    match name {
        "trained" => Ok(ReplicateStatus::Trained),
        "empty_oob" => Ok(ReplicateStatus::EmptyOob),
        "failed" => Ok(ReplicateStatus::Failed),
        other => Err(bank_err(path, format!("unknown status {other:?}"))),
    }
}

fn model_path(dir: &Path, theta: usize, replicate: usize) -> PathBuf {
    dir.join("models")
        .join(format!("theta_{theta:02}"))
        .join(format!("b_{replicate:04}.model"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
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

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
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

/// Writes the bank directory, creating it as needed. Existing files of
/// the same names are overwritten.
pub fn save_bank(dir: &Path, saved: &SavedBank) -> Result<()> {
    let bank = &saved.bank;
    let n_replicates = bank.replicates.first().map_or(0, |r| r.len());
    let feature_names = saved.transform.output_names();
    if feature_names.len() != saved.features.n_cols() {
        return Err(bank_err(
            dir,
            format!(
                "transform yields {} columns, features have {}",
                feature_names.len(),
                saved.features.n_cols()
            ),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let manifest = BankManifest {
        version: BANK_VERSION,
        seed: bank.seed,
        n_replicates,
        grid: bank.grid.values().to_vec(),
        features: feature_names.clone(),
    };
    let manifest_path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| bank_err(&manifest_path, e.to_string()))?;
    fs::write(&manifest_path, text)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;

    let transform_path = dir.join("transform.toml");
    let text =
        toml::to_string(&saved.transform).map_err(|e| bank_err(&transform_path, e.to_string()))?;
    fs::write(&transform_path, text)
        .map_err(|e| Error::io(transform_path.display().to_string(), e))?;

    let train_path = dir.join("train.csv");
    {
        let file = fs::File::create(&train_path)
            .map_err(|e| Error::io(train_path.display().to_string(), e))?;
        let mut writer = csv::Writer::from_writer(file);
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(feature_names);
        writer.write_record(&header).map_err(|e| Error::Csv {
            path: train_path.display().to_string(),
            message: e.to_string(),
        })?;
        for r in 0..saved.features.n_rows() {
            let mut record = vec![saved.ids[r].to_string(), saved.labels[r].to_string()];
            record.extend(saved.features.row(r).iter().map(|v| v.to_string()));
            writer.write_record(&record).map_err(|e| Error::Csv {
                path: train_path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(train_path.display().to_string(), e))?;
    }

    let mut acc = Vec::new();
    let mut oob = Vec::new();
    for (theta, replicates) in bank.replicates.iter().enumerate() {
        let theta_dir = dir.join("models").join(format!("theta_{theta:02}"));
        fs::create_dir_all(&theta_dir)
            .map_err(|e| Error::io(theta_dir.display().to_string(), e))?;
        for (b, rep) in replicates.iter().enumerate() {
            acc.push(AccRow {
                theta,
                replicate: b,
                status: status_name(rep.status).to_string(),
                seed: rep.seed,
                attempts: rep.attempts,
                accuracy: rep.oob_accuracy,
            });
            for &row in &rep.oob_rows {
                oob.push(OobRow {
                    theta,
                    replicate: b,
                    row,
                });
            }
            if let Some(model) = &rep.model {
                write_model(&model_path(dir, theta, b), model)?;
            }
        }
    }
    write_csv(&dir.join("acc.csv"), &acc)?;
    write_csv(&dir.join("oob.csv"), &oob)?;
    Ok(())
}

/// Reads a bank directory back. Every structural mismatch is an error:
/// missing files, duplicate replicate entries, out-of-range indices,
/// statuses that contradict the stored models.
pub fn load_bank(dir: &Path) -> Result<SavedBank> {
    let manifest_path = dir.join("manifest.toml");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: BankManifest =
        toml::from_str(&text).map_err(|e| bank_err(&manifest_path, e.to_string()))?;
    if manifest.version != BANK_VERSION {
        return Err(bank_err(
            &manifest_path,
            format!("unsupported version {}", manifest.version),
        ));
    }
    let grid = ParameterGrid::new(manifest.grid.clone())?;

    let transform_path = dir.join("transform.toml");
    let text = fs::read_to_string(&transform_path)
        .map_err(|e| Error::io(transform_path.display().to_string(), e))?;
    let transform: FittedTransform =
        toml::from_str(&text).map_err(|e| bank_err(&transform_path, e.to_string()))?;
    if transform.output_names() != manifest.features {
        return Err(bank_err(
            &transform_path,
            "transform columns disagree with the manifest".to_string(),
        ));
    }

    let train_path = dir.join("train.csv");
    let (ids, labels, features) = {
        let file = fs::File::open(&train_path)
            .map_err(|e| Error::io(train_path.display().to_string(), e))?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers().map_err(|e| Error::Csv {
            path: train_path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut expected = vec!["id".to_string(), "label".to_string()];
        expected.extend(manifest.features.iter().cloned());
        if header.iter().map(str::to_string).collect::<Vec<_>>() != expected {
            return Err(bank_err(&train_path, "unexpected header".to_string()));
        }
        let width = manifest.features.len();
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Csv {
                path: train_path.display().to_string(),
                message: e.to_string(),
            })?;
            if record.len() != width + 2 {
                return Err(bank_err(&train_path, format!("short row {line}")));
            }
            let parse = |field: &str, what: &str| -> Result<f64> {
                field
                    .parse::<f64>()
                    .map_err(|_| bank_err(&train_path, format!("bad {what} in row {line}")))
            };
            ids.push(
                record[0]
                    .parse::<u64>()
                    .map_err(|_| bank_err(&train_path, format!("bad id in row {line}")))?,
            );
            let label = record[1]
                .parse::<i8>()
                .ok()
                .filter(|l| *l == 1 || *l == -1)
                .ok_or_else(|| bank_err(&train_path, format!("bad label in row {line}")))?;
            labels.push(label);
            for field in record.iter().skip(2) {
                data.push(parse(field, "feature")?);
            }
        }
        (ids, labels, Features::new(width, data))
    };
    let m = features.n_rows();

    let acc: Vec<AccRow> = read_csv(&dir.join("acc.csv"))?;
    let acc_path = dir.join("acc.csv");
    let mut replicates: Vec<Vec<Option<Replicate>>> =
        vec![(0..manifest.n_replicates).map(|_| None).collect(); grid.len()];
    for row in acc {
        if row.theta >= grid.len() || row.replicate >= manifest.n_replicates {
            return Err(bank_err(
                &acc_path,
                format!("replicate ({}, {}) out of range", row.theta, row.replicate),
            ));
        }
        let slot = &mut replicates[row.theta][row.replicate];
        if slot.is_some() {
            return Err(bank_err(
                &acc_path,
                format!("duplicate replicate ({}, {})", row.theta, row.replicate),
            ));
        }
        let status = parse_status(&row.status, &acc_path)?;
        let model = if matches!(status, ReplicateStatus::Failed) {
            None
        } else {
            Some(read_model(&model_path(dir, row.theta, row.replicate))?)
        };
        if matches!(status, ReplicateStatus::Trained) != row.accuracy.is_some() {
            return Err(bank_err(
                &acc_path,
                format!(
                    "accuracy and status disagree for ({}, {})",
                    row.theta, row.replicate
                ),
            ));
        }
        *slot = Some(Replicate {
            seed: row.seed,
            attempts: row.attempts,
            model,
            oob_rows: Vec::new(),
            oob_accuracy: row.accuracy,
            status,
        });
    }

    let oob_path = dir.join("oob.csv");
    let oob: Vec<OobRow> = read_csv(&oob_path)?;
    for row in oob {
        if row.theta >= grid.len() || row.replicate >= manifest.n_replicates {
            return Err(bank_err(
                &oob_path,
                format!("membership ({}, {}) out of range", row.theta, row.replicate),
            ));
        }
        if row.row >= m {
            return Err(bank_err(&oob_path, format!("row {} out of range", row.row)));
        }
        match &mut replicates[row.theta][row.replicate] {
            Some(rep) => rep.oob_rows.push(row.row),
            None => {
                return Err(bank_err(
                    &oob_path,
                    format!(
                        "membership for missing replicate ({}, {})",
                        row.theta, row.replicate
                    ),
                ))
            }
        }
    }

    let mut complete = Vec::with_capacity(grid.len());
    for (theta, row) in replicates.into_iter().enumerate() {
        let mut filled = Vec::with_capacity(row.len());
        for (b, rep) in row.into_iter().enumerate() {
            filled.push(rep.ok_or_else(|| {
                bank_err(&acc_path, format!("replicate ({theta}, {b}) never listed"))
            })?);
        }
        complete.push(filled);
    }

    Ok(SavedBank {
        bank: EnsembleBank {
            grid,
            replicates: complete,
            seed: manifest.seed,
        },
        transform,
        features,
        labels,
        ids,
    })
}
