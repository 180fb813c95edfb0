//! Train-fitted preprocessing: imputation, dummy encoding, z-scoring.
//!
//! All statistics come from the training split only; the fitted transform
//! is then applied to any other split or to fresh prediction rows. Order
//! of operations: impute, encode categoricals as one dummy column per
//! training level, standardize the originally numeric columns.

use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, Column, ColumnKind, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PreprocessPolicy {
    /// Z-score numeric columns with training mean/std. Dummy columns are
    /// never scaled.
    pub standardize: bool,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        PreprocessPolicy { standardize: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ColumnTransform {
    Numeric {
        name: String,
        impute: f64,
        mean: f64,
        /// Sample standard deviation of the imputed training column,
        /// guarded: constant columns store 1 so the divisor is a no-op.
        std: f64,
    },
    Categorical {
        name: String,
        impute: String,
        /// Sorted distinct training levels; one dummy column per level.
        /// Levels unseen at fit time map to an all-zero block.
        levels: Vec<String>,
    },
}

impl ColumnTransform {
    fn name(&self) -> &str {
        match self {
            ColumnTransform::Numeric { name, .. } => name,
            ColumnTransform::Categorical { name, .. } => name,
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            ColumnTransform::Numeric { .. } => ColumnKind::Numeric,
            ColumnTransform::Categorical { .. } => ColumnKind::Categorical,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FittedTransform {
    pub steps: Vec<ColumnTransform>,
    pub policy: PreprocessPolicy,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Fits imputation values, dummy levels, and scaling statistics on the
/// training split.
pub fn fit(train: &Dataset, policy: PreprocessPolicy) -> FittedTransform {
    let mut steps = Vec::with_capacity(train.n_columns());
    for (c, col) in train.columns().iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                let mut observed: Vec<f64> = (0..train.len())
                    .filter_map(|r| match train.cell(r, c) {
                        Cell::Number(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let impute = median(&observed);
                let imputed: Vec<f64> = (0..train.len())
                    .map(|r| match train.cell(r, c) {
                        Cell::Number(v) => *v,
                        _ => impute,
                    })
                    .collect();
                let n = imputed.len() as f64;
                let mean = if imputed.is_empty() {
                    0.0
                } else {
                    imputed.iter().sum::<f64>() / n
                };
                let std = if imputed.len() < 2 {
                    1.0
                } else {
                    let var =
                        imputed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                    let s = var.sqrt();
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                };
                steps.push(ColumnTransform::Numeric {
                    name: col.name.clone(),
                    impute,
                    mean,
                    std,
                });
            }
            ColumnKind::Categorical => {
                let mut levels: Vec<String> = Vec::new();
                for r in 0..train.len() {
                    if let Cell::Text(v) = train.cell(r, c) {
                        if !levels.contains(v) {
                            levels.push(v.clone());
                        }
                    }
                }
                levels.sort();
                // Mode of the observed values; ties break toward the
                // lexicographically smallest level.
                let impute = levels
                    .iter()
                    .map(|l| {
                        let count = (0..train.len())
                            .filter(|&r| matches!(train.cell(r, c), Cell::Text(v) if v == l))
                            .count();
                        (l.clone(), count)
                    })
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(l, _)| l)
                    .unwrap_or_default();
                steps.push(ColumnTransform::Categorical {
                    name: col.name.clone(),
                    impute,
                    levels,
                });
            }
        }
    }
    FittedTransform { steps, policy }
}

impl FittedTransform {
    /// Names of the produced numeric columns, dummies expanded in place.
    pub fn output_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for step in &self.steps {
            match step {
                ColumnTransform::Numeric { name, .. } => names.push(name.clone()),
                ColumnTransform::Categorical { name, levels, .. } => {
                    for l in levels {
                        names.push(format!("{name}={l}"));
                    }
                }
            }
        }
        names
    }

    /// Applies the fitted statistics to a dataset with the same schema.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.n_columns() != self.steps.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns, transform fitted on {}",
                data.n_columns(),
                self.steps.len()
            )));
        }
        for (col, step) in data.columns().iter().zip(&self.steps) {
            if col.name != step.name() || col.kind != step.kind() {
                return Err(Error::SchemaMismatch(format!(
                    "column {:?} ({:?}) vs fitted {:?} ({:?})",
                    col.name,
                    col.kind,
                    step.name(),
                    step.kind()
                )));
            }
        }

        let out_columns: Vec<Column> = self
            .output_names()
            .into_iter()
            .map(|name| Column {
                name,
                kind: ColumnKind::Numeric,
            })
            .collect();
        let width = out_columns.len();
        let mut cells = Vec::with_capacity(data.len() * width);
        for r in 0..data.len() {
            for (c, step) in self.steps.iter().enumerate() {
                match step {
                    ColumnTransform::Numeric {
                        impute, mean, std, ..
                    } => {
                        let v = match data.cell(r, c) {
                            Cell::Number(v) => *v,
                            _ => *impute,
                        };
                        let v = if self.policy.standardize {
                            (v - mean) / std
                        } else {
                            v
                        };
                        cells.push(Cell::Number(v));
                    }
                    ColumnTransform::Categorical { impute, levels, .. } => {
                        let v = match data.cell(r, c) {
                            Cell::Text(v) => v.as_str(),
                            _ => impute.as_str(),
                        };
                        for l in levels {
                            cells.push(Cell::Number(if v == l { 1.0 } else { 0.0 }));
                        }
                    }
                }
            }
        }
        let labels = (0..data.len()).map(|r| data.label(r)).collect();
        let ids = data.ids().to_vec();
        Dataset::from_parts(out_columns, cells, labels, ids)
    }
}

/// Fits on `train`, applies to both splits.
pub fn preprocess(
    train: &Dataset,
    other: &Dataset,
    policy: PreprocessPolicy,
) -> Result<(FittedTransform, Dataset, Dataset)> {
    let t = fit(train, policy);
    let train_out = t.apply(train)?;
    let other_out = t.apply(other)?;
    Ok((t, train_out, other_out))
}
