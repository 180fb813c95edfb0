//! Soft-margin linear classifier: training entry point, scoring, and
//! evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::smo::{self, SmoOptions, SmoProblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub iterations: u64,
    pub kkt_violation: f64,
    pub converged: bool,
    pub dual_objective: f64,
}

/// A trained linear decision function `f(x) = <weights, x> + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Box bound the model was trained with.
    pub cost: f64,
    pub diagnostics: TrainingDiagnostics,
}

impl SvmModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept
    }

    /// Predicted label; a score of exactly zero counts as positive.
    pub fn predict(&self, x: &[f64]) -> i8 {
        if self.score(x) >= 0.0 {
            1
        } else {
            -1
        }
    }

    pub fn scores(&self, features: &Features) -> Result<Vec<f64>> {
        if features.n_cols() != self.weights.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} feature columns, model has {} weights",
                features.n_cols(),
                self.weights.len()
            )));
        }
        Ok((0..features.len())
            .map(|i| self.score(features.row(i)))
            .collect())
    }

    pub fn predictions(&self, features: &Features) -> Result<Vec<i8>> {
        Ok(self
            .scores(features)?
            .into_iter()
            .map(|s| if s >= 0.0 { 1 } else { -1 })
            .collect())
    }
}

/// Trains the plain soft-margin machine with box bound `cost` on every
/// dual variable.
pub fn train_svm(features: &Features, labels: &[i8], cost: f64) -> Result<SvmModel> {
    if !cost.is_finite() || cost <= 0.0 {
        return Err(Error::invalid("cost", format!("{cost} is not positive")));
    }
    if labels.len() != features.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.len() < 2 {
        return Err(Error::TooFewRows {
            context: "training".into(),
            needed: 2,
            got: features.len(),
        });
    }
    let has_pos = labels.contains(&1);
    let has_neg = labels.contains(&-1);
    if !has_pos || !has_neg {
        return Err(Error::SingleClass);
    }

    let y: Vec<f64> = labels.iter().map(|l| *l as f64).collect();
    let upper = vec![cost; features.len()];
    let problem = SmoProblem {
        features,
        labels: &y,
        upper: &upper,
        kernel_scale: 1.0,
    };
    let out = smo::solve(&problem, &SmoOptions::default())?;
    let weights = smo::primal_weights(features, &y, &out.alpha, 1.0);
    Ok(SvmModel {
        weights,
        intercept: out.intercept,
        cost,
        diagnostics: TrainingDiagnostics {
            iterations: out.iterations,
            kkt_violation: out.kkt_violation,
            converged: out.converged,
            dual_objective: out.dual_objective,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    Tpr,
    Tnr,
    GMean,
}

impl Metric {
    pub fn parse(name: &str) -> Result<Metric> {
        match name {
            "accuracy" => Ok(Metric::Accuracy),
            "tpr" => Ok(Metric::Tpr),
            "tnr" => Ok(Metric::Tnr),
            "gmean" => Ok(Metric::GMean),
            other => Err(Error::invalid(
                "metric",
                format!("{other:?} is not one of accuracy, tpr, tnr, gmean"),
            )),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Metric::Accuracy => "accuracy",
            Metric::Tpr => "tpr",
            Metric::Tnr => "tnr",
            Metric::GMean => "gmean",
        };
        f.write_str(name)
    }
}

/// Computes `metric` from aligned predictions and reference labels.
pub fn evaluate(predictions: &[i8], labels: &[i8], metric: Metric) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} predictions, {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let undefined = |message: &str| Error::MetricUndefined {
        metric: metric.to_string(),
        message: message.into(),
    };
    if predictions.is_empty() {
        return Err(undefined("no rows"));
    }
    let mut tp = 0usize;
    let mut tn = 0usize;
    let mut pos = 0usize;
    let mut neg = 0usize;
    for (&p, &l) in predictions.iter().zip(labels) {
        match l {
            1 => {
                pos += 1;
                if p == 1 {
                    tp += 1;
                }
            }
            -1 => {
                neg += 1;
                if p == -1 {
                    tn += 1;
                }
            }
            other => {
                return Err(Error::invalid(
                    "labels",
                    format!("label {other} not in {{-1, 1}}"),
                ))
            }
        }
    }
    let tpr = || {
        if pos == 0 {
            Err(undefined("no positive rows"))
        } else {
            Ok(tp as f64 / pos as f64)
        }
    };
    let tnr = || {
        if neg == 0 {
            Err(undefined("no negative rows"))
        } else {
            Ok(tn as f64 / neg as f64)
        }
    };
    match metric {
        Metric::Accuracy => Ok((tp + tn) as f64 / (pos + neg) as f64),
        Metric::Tpr => tpr(),
        Metric::Tnr => tnr(),
        Metric::GMean => Ok((tpr()? * tnr()?).sqrt()),
    }
}
