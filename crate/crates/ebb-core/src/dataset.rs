//! Tabular data loading and the numeric feature view used by training.
//!
//! CSV files carry a header row. A column is numeric when every
//! non-missing cell parses as a float; anything else is categorical.
//! Empty cells are missing values. Labels map to +1/-1 at load time via
//! the manifest's positive-class token.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Missing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Clone, Debug)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Rows of instances plus column metadata. Feature cells stay raw until
/// preprocessing turns them all numeric; labels are +1/-1 where known.
/// Row ids are stable (position in the originating file) and unique.
#[derive(Clone, Debug)]
pub struct Dataset {
    columns: Vec<Column>,
    cells: Vec<Cell>,
    labels: Vec<Option<i8>>,
    ids: Vec<u64>,
}

impl Dataset {
    pub fn from_parts(
        columns: Vec<Column>,
        cells: Vec<Cell>,
        labels: Vec<Option<i8>>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let rows = labels.len();
        if ids.len() != rows || cells.len() != rows * columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} labels, {} ids, {} cells for {} columns",
                rows,
                ids.len(),
                cells.len(),
                columns.len()
            )));
        }
        if labels.iter().flatten().any(|&l| l != 1 && l != -1) {
            return Err(Error::SchemaMismatch("labels must be +1/-1".into()));
        }
        let mut seen = ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != ids.len() {
            return Err(Error::SchemaMismatch("duplicate row ids".into()));
        }
        Ok(Dataset {
            columns,
            cells,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[row * self.columns.len() + col]
    }

    pub fn label(&self, row: usize) -> Option<i8> {
        self.labels[row]
    }

    pub fn id(&self, row: usize) -> u64 {
        self.ids[row]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row_by_id(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// New dataset holding the given rows (by position), in order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let ncol = self.columns.len();
        let mut cells = Vec::with_capacity(rows.len() * ncol);
        let mut labels = Vec::with_capacity(rows.len());
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            cells.extend(self.cells[r * ncol..(r + 1) * ncol].iter().cloned());
            labels.push(self.labels[r]);
            ids.push(self.ids[r]);
        }
        Dataset {
            columns: self.columns.clone(),
            cells,
            labels,
            ids,
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l == Some(1)).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.iter().filter(|l| **l == Some(-1)).count()
    }

    /// Signed labels for training; errors if any row is unlabeled.
    pub fn signed_labels(&self, context: &str) -> Result<Vec<i8>> {
        self.labels
            .iter()
            .map(|l| {
                l.ok_or_else(|| Error::Unlabeled {
                    context: context.to_string(),
                })
            })
            .collect()
    }

    /// Dense row-major matrix of an all-numeric dataset.
    pub fn features(&self) -> Result<Features> {
        let ncol = self.columns.len();
        let mut data = Vec::with_capacity(self.cells.len());
        for (i, cell) in self.cells.iter().enumerate() {
            match cell {
                Cell::Number(v) if v.is_finite() => data.push(*v),
                Cell::Number(_) => {
                    return Err(Error::NonFinite {
                        context: format!("column {:?}", self.columns[i % ncol].name),
                    })
                }
                _ => return Err(Error::NotNumeric(self.columns[i % ncol].name.clone())),
            }
        }
        Ok(Features { n_cols: ncol, data })
    }
}

/// Row-major numeric matrix extracted from a preprocessed dataset.
#[derive(Clone, Debug)]
pub struct Features {
    n_cols: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(n_cols: usize, data: Vec<f64>) -> Self {
        assert!(n_cols > 0 && data.len().is_multiple_of(n_cols));
        Features { n_cols, data }
    }

    /// Builds from per-row vectors; rows must share one nonzero width and
    /// hold only finite values.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Features> {
        let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if n_cols == 0 {
            return Err(Error::TooFewRows {
                context: "feature matrix".into(),
                needed: 1,
                got: 0,
            });
        }
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in &rows {
            if row.len() != n_cols {
                return Err(Error::SchemaMismatch(format!(
                    "feature row width {} differs from {}",
                    row.len(),
                    n_cols
                )));
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "feature matrix".into(),
            });
        }
        Ok(Features { n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    /// Row count; alias of `n_rows` for index-style call sites.
    pub fn len(&self) -> usize {
        self.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Manifest describing how to read one dataset: file, label mapping, and
/// any explicit column kinds. Everything an experiment needs to rebuild
/// the dataset lives here.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub csv: String,
    pub label_column: String,
    #[serde(default)]
    pub positive_label: Option<String>,
    /// Multi-class collapse: the most frequent label value becomes the
    /// negative class, every other value the positive class.
    #[serde(default)]
    pub collapse_largest_to_negative: bool,
    /// Overrides for inferred column kinds ("numeric"/"categorical").
    #[serde(default)]
    pub kind_overrides: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let m: DatasetManifest = toml::from_str(&text).map_err(|e| Error::Manifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if m.positive_label.is_none() && !m.collapse_largest_to_negative {
            return Err(Error::Manifest {
                path: path.display().to_string(),
                message: "needs positive_label or collapse_largest_to_negative".into(),
            });
        }
        Ok(m)
    }

    pub fn csv_path(&self, manifest_path: &Path) -> PathBuf {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        base.join(&self.csv)
    }
}

/// Loads the dataset a manifest describes.
pub fn load_from_manifest(manifest_path: &Path) -> Result<(DatasetManifest, Dataset)> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let csv_path = manifest.csv_path(manifest_path);
    let data = load_csv(&csv_path, &manifest)?;
    Ok((manifest, data))
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(RawTable { header, rows })
}

fn infer_kind(values: impl Iterator<Item = impl AsRef<str>>) -> ColumnKind {
    for v in values {
        let v = v.as_ref();
        if v.is_empty() {
            continue;
        }
        if v.parse::<f64>().is_err() {
            return ColumnKind::Categorical;
        }
    }
    ColumnKind::Numeric
}

/// Loads a labeled dataset: feature columns typed by inference (or
/// manifest override), labels mapped to +1/-1.
pub fn load_csv(path: &Path, manifest: &DatasetManifest) -> Result<Dataset> {
    let table = read_raw(path)?;
    let label_idx = table
        .header
        .iter()
        .position(|h| *h == manifest.label_column)
        .ok_or_else(|| Error::NoSuchColumn(manifest.label_column.clone()))?;

    let labels = map_labels(&table, label_idx, manifest)?;

    let feature_cols: Vec<usize> = (0..table.header.len())
        .filter(|&c| c != label_idx)
        .collect();
    let (columns, cells) = build_cells(&table, &feature_cols, manifest, path)?;
    let ids = (0..table.rows.len() as u64).collect();
    Dataset::from_parts(columns, cells, labels, ids)
}

/// Loads feature rows with no label column requirement; any label column
/// present in the manifest is used when found and left unknown otherwise.
pub fn load_csv_unlabeled(path: &Path, manifest: &DatasetManifest) -> Result<Dataset> {
    let table = read_raw(path)?;
    let label_idx = table
        .header
        .iter()
        .position(|h| *h == manifest.label_column);
    let labels = match label_idx {
        Some(idx) => map_labels(&table, idx, manifest)?,
        None => vec![None; table.rows.len()],
    };
    let feature_cols: Vec<usize> = (0..table.header.len())
        .filter(|&c| Some(c) != label_idx)
        .collect();
    let (columns, cells) = build_cells(&table, &feature_cols, manifest, path)?;
    let ids = (0..table.rows.len() as u64).collect();
    Dataset::from_parts(columns, cells, labels, ids)
}

fn map_labels(
    table: &RawTable,
    label_idx: usize,
    manifest: &DatasetManifest,
) -> Result<Vec<Option<i8>>> {
    let raw: Vec<&str> = table.rows.iter().map(|r| r[label_idx].as_str()).collect();
    if manifest.collapse_largest_to_negative {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &raw {
            *counts.entry(v).or_default() += 1;
        }
        // Ties on the largest class break toward the lexicographically
        // smallest value so the collapse is deterministic.
        let largest = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(v, _)| v.to_string())
            .ok_or_else(|| Error::SchemaMismatch("empty dataset".into()))?;
        return Ok(raw
            .iter()
            .map(|v| Some(if **v == largest { -1 } else { 1 }))
            .collect());
    }

    let positive = manifest.positive_label.as_deref().expect("validated");
    let mut labels = Vec::with_capacity(raw.len());
    let mut distinct: Vec<&str> = Vec::new();
    for (row, v) in raw.iter().enumerate() {
        if v.is_empty() {
            return Err(Error::BadLabel {
                column: manifest.label_column.clone(),
                value: String::new(),
                row,
            });
        }
        if !distinct.contains(v) {
            distinct.push(v);
        }
        labels.push(Some(if *v == positive { 1 } else { -1 }));
    }
    if distinct.len() > 2 {
        return Err(Error::BadLabel {
            column: manifest.label_column.clone(),
            value: format!(
                "{} distinct values (binary labels required)",
                distinct.len()
            ),
            row: 0,
        });
    }
    if !distinct.contains(&positive) {
        return Err(Error::BadLabel {
            column: manifest.label_column.clone(),
            value: format!("positive token {positive:?} never occurs"),
            row: 0,
        });
    }
    Ok(labels)
}

fn build_cells(
    table: &RawTable,
    feature_cols: &[usize],
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<(Vec<Column>, Vec<Cell>)> {
    for name in manifest.kind_overrides.keys() {
        if !table.header.contains(name) {
            return Err(Error::NoSuchColumn(name.clone()));
        }
    }
    let mut columns = Vec::with_capacity(feature_cols.len());
    for &c in feature_cols {
        let name = table.header[c].clone();
        let kind = match manifest.kind_overrides.get(&name).map(String::as_str) {
            Some("numeric") => ColumnKind::Numeric,
            Some("categorical") => ColumnKind::Categorical,
            Some(other) => {
                return Err(Error::Manifest {
                    path: path.display().to_string(),
                    message: format!("kind override {other:?} for {name:?}"),
                })
            }
            None => infer_kind(table.rows.iter().map(|r| &r[c])),
        };
        columns.push(Column { name, kind });
    }

    let mut cells = Vec::with_capacity(table.rows.len() * feature_cols.len());
    for (row_idx, row) in table.rows.iter().enumerate() {
        for (k, &c) in feature_cols.iter().enumerate() {
            let v = &row[c];
            let cell = if v.is_empty() {
                Cell::Missing
            } else {
                match columns[k].kind {
                    ColumnKind::Numeric => match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => Cell::Number(x),
                        Ok(_) => {
                            return Err(Error::BadCell {
                                column: columns[k].name.clone(),
                                row: row_idx,
                                message: format!("non-finite value {v:?}"),
                            })
                        }
                        Err(_) => {
                            return Err(Error::BadCell {
                                column: columns[k].name.clone(),
                                row: row_idx,
                                message: format!("expected number, got {v:?}"),
                            })
                        }
                    },
                    ColumnKind::Categorical => Cell::Text(v.clone()),
                }
            };
            cells.push(cell);
        }
    }
    Ok((columns, cells))
}
