//! Bootstrap ensembles over a regularization grid.
//!
//! For every grid value a bank of classifiers is trained on independent
//! bootstrap replicates of the training split. Each replicate's accuracy
//! on its out-of-bag rows estimates generalization; grid values within a
//! tolerance window of the best mean accuracy form the candidate set,
//! weighted proportionally to their means. The positive-class
//! probability of a point is the weighted share of in-candidate
//! replicates that score it at or above the grid value's threshold.

use rayon::prelude::*;

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::split::bootstrap_sample;
use crate::svm::{evaluate, train_svm, Metric, SvmModel};

/// Regularization grid, strictly increasing positive values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    values: Vec<f64>,
}

impl ParameterGrid {
    pub fn new(values: Vec<f64>) -> Result<ParameterGrid> {
        if values.is_empty() {
            return Err(Error::invalid("grid", "no values"));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid("grid", "values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid", "values must be strictly increasing"));
        }
        Ok(ParameterGrid { values })
    }

    /// Powers of two from 2^-5 through 2^5.
    pub fn default_grid() -> ParameterGrid {
        ParameterGrid {
            values: (-5..=5).map(|e| (e as f64).exp2()).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> Result<f64> {
        self.values.get(index).copied().ok_or(Error::GridIndex {
            index,
            len: self.values.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplicateStatus {
    /// Model trained and out-of-bag accuracy available.
    Trained,
    /// Model trained but the bootstrap draw covered every row, so there
    /// is no out-of-bag estimate. Votes, but carries no accuracy.
    EmptyOob,
    /// No usable draw within the attempt budget. Excluded everywhere.
    Failed,
}

/// One bootstrap replicate of one grid value.
#[derive(Clone, Debug)]
pub struct Replicate {
    /// Seed of the accepted draw (last attempted draw when failed).
    pub seed: u64,
    /// Bootstrap draws consumed, 1 unless redraws were needed.
    pub attempts: u32,
    pub model: Option<SvmModel>,
    /// Training-split row indices the draw left out.
    pub oob_rows: Vec<usize>,
    pub oob_accuracy: Option<f64>,
    pub status: ReplicateStatus,
}

#[derive(Clone, Debug)]
pub struct EnsembleSettings {
    pub grid: ParameterGrid,
    /// Replicates per grid value.
    pub n_replicates: usize,
    /// Redraw budget per replicate for single-class bootstrap draws.
    pub redraw_attempts: u32,
    pub seed: u64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            grid: ParameterGrid::default_grid(),
            n_replicates: 500,
            redraw_attempts: 5,
            seed: 0,
        }
    }
}

/// The trained bank: `replicates[j][b]` is replicate `b` of grid value `j`.
#[derive(Clone, Debug)]
pub struct EnsembleBank {
    pub grid: ParameterGrid,
    pub replicates: Vec<Vec<Replicate>>,
    pub seed: u64,
}

fn train_replicate(
    features: &Features,
    labels: &[i8],
    cost: f64,
    master_seed: u64,
    grid_index: usize,
    replicate: usize,
    redraw_attempts: u32,
) -> Replicate {
    let m = features.len();
    let mut seed = 0;
    for attempt in 0..redraw_attempts.max(1) {
        seed = derive_seed(
            master_seed,
            &[grid_index as u64, replicate as u64, attempt as u64],
        );
        let draw = bootstrap_sample(m, seed);
        let rows: Vec<Vec<f64>> = draw
            .in_bag
            .iter()
            .map(|&r| features.row(r).to_vec())
            .collect();
        let draw_labels: Vec<i8> = draw.in_bag.iter().map(|&r| labels[r]).collect();
        let sub = match Features::from_rows(rows) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let model = match train_svm(&sub, &draw_labels, cost) {
            Ok(model) => model,
            // Single-class draws are the one expected failure; redraw.
            Err(_) => continue,
        };
        let (status, oob_accuracy) = if draw.out_of_bag.is_empty() {
            (ReplicateStatus::EmptyOob, None)
        } else {
            let preds: Vec<i8> = draw
                .out_of_bag
                .iter()
                .map(|&r| model.predict(features.row(r)))
                .collect();
            let truth: Vec<i8> = draw.out_of_bag.iter().map(|&r| labels[r]).collect();
            let acc = evaluate(&preds, &truth, Metric::Accuracy).ok();
            (ReplicateStatus::Trained, acc)
        };
        return Replicate {
            seed,
            attempts: attempt + 1,
            model: Some(model),
            oob_rows: draw.out_of_bag,
            oob_accuracy,
            status,
        };
    }
    Replicate {
        seed,
        attempts: redraw_attempts.max(1),
        model: None,
        oob_rows: Vec::new(),
        oob_accuracy: None,
        status: ReplicateStatus::Failed,
    }
}

/// Trains the full bank. Deterministic in `settings.seed`: replicate
/// seeds derive from (grid index, replicate index, attempt), so thread
/// scheduling cannot change any draw.
pub fn train_ensemble(
    features: &Features,
    labels: &[i8],
    settings: &EnsembleSettings,
) -> Result<EnsembleBank> {
    if settings.n_replicates == 0 {
        return Err(Error::invalid("n_replicates", "must be at least 1"));
    }
    if labels.len() != features.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..settings.grid.len())
        .flat_map(|j| (0..settings.n_replicates).map(move |b| (j, b)))
        .collect();
    let trained: Vec<Replicate> = pairs
        .par_iter()
        .map(|&(j, b)| {
            train_replicate(
                features,
                labels,
                settings.grid.values()[j],
                settings.seed,
                j,
                b,
                settings.redraw_attempts,
            )
        })
        .collect();
    let mut replicates: Vec<Vec<Replicate>> = Vec::with_capacity(settings.grid.len());
    let mut it = trained.into_iter();
    for _ in 0..settings.grid.len() {
        replicates.push(it.by_ref().take(settings.n_replicates).collect());
    }
    Ok(EnsembleBank {
        grid: settings.grid.clone(),
        replicates,
        seed: settings.seed,
    })
}

impl EnsembleBank {
    /// Mean out-of-bag accuracy per grid value; `None` when no replicate
    /// produced an estimate.
    pub fn mean_performance(&self) -> Vec<Option<f64>> {
        self.replicates
            .iter()
            .map(|reps| {
                let accs: Vec<f64> = reps.iter().filter_map(|r| r.oob_accuracy).collect();
                if accs.is_empty() {
                    None
                } else {
                    Some(accs.iter().sum::<f64>() / accs.len() as f64)
                }
            })
            .collect()
    }

    /// Replicates that vote (trained, possibly without an accuracy).
    pub fn voting_count(&self, grid_index: usize) -> usize {
        self.replicates[grid_index]
            .iter()
            .filter(|r| r.model.is_some())
            .count()
    }

    /// Builds the predictor with all vote thresholds at zero.
    pub fn predictor(&self, tolerance_window: f64) -> Result<EnsemblePredictor<'_>> {
        self.predictor_with_thresholds(tolerance_window, vec![0.0; self.grid.len()])
    }

    /// Builds the predictor with one vote threshold per grid value.
    pub fn predictor_with_thresholds(
        &self,
        tolerance_window: f64,
        thresholds: Vec<f64>,
    ) -> Result<EnsemblePredictor<'_>> {
        if thresholds.len() != self.grid.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} thresholds for {} grid values",
                thresholds.len(),
                self.grid.len()
            )));
        }
        let weights = reliability_weights(&self.mean_performance(), tolerance_window)?;
        let denominators = (0..self.grid.len()).map(|j| self.voting_count(j)).collect();
        Ok(EnsemblePredictor {
            bank: self,
            weights,
            thresholds,
            denominators,
        })
    }
}

/// Turns mean accuracies into candidate-set weights: values within
/// `tolerance_window` of the best mean share weight proportionally to
/// their means; everything else gets zero. All-zero candidate means fall
/// back to uniform weight.
pub fn reliability_weights(means: &[Option<f64>], tolerance_window: f64) -> Result<Vec<f64>> {
    if !tolerance_window.is_finite() || tolerance_window < 0.0 {
        return Err(Error::invalid(
            "tolerance_window",
            format!("{tolerance_window} is not a nonnegative number"),
        ));
    }
    let best = means
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if best == f64::NEG_INFINITY {
        return Err(Error::NoUsableReplicates(
            "every replicate of every grid value failed or had no out-of-bag rows".into(),
        ));
    }
    let candidate = |m: &Option<f64>| matches!(m, Some(v) if *v >= best - tolerance_window);
    let total: f64 = means.iter().filter(|m| candidate(m)).flatten().sum();
    let n_candidates = means.iter().filter(|m| candidate(m)).count();
    let weights = means
        .iter()
        .map(|m| {
            if !candidate(m) {
                0.0
            } else if total > 0.0 {
                m.unwrap() / total
            } else {
                1.0 / n_candidates as f64
            }
        })
        .collect();
    Ok(weights)
}

/// A bank plus its candidate weights and vote thresholds.
#[derive(Clone, Debug)]
pub struct EnsemblePredictor<'a> {
    bank: &'a EnsembleBank,
    weights: Vec<f64>,
    thresholds: Vec<f64>,
    denominators: Vec<usize>,
}

impl EnsemblePredictor<'_> {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Vote share of grid value `j` for `x`: the fraction of its trained
    /// replicates scoring at or above the threshold (ties positive).
    /// `None` when nothing votes or the value is outside the candidates.
    pub fn vote_share(&self, j: usize, x: &[f64]) -> Option<f64> {
        if self.weights[j] == 0.0 || self.denominators[j] == 0 {
            return None;
        }
        let hits = self.bank.replicates[j]
            .iter()
            .filter_map(|r| r.model.as_ref())
            .filter(|m| m.score(x) >= self.thresholds[j])
            .count();
        Some(hits as f64 / self.denominators[j] as f64)
    }

    /// Positive-class probability: candidate-weighted vote share.
    pub fn probability_positive(&self, x: &[f64]) -> f64 {
        (0..self.weights.len())
            .filter_map(|j| self.vote_share(j, x).map(|q| self.weights[j] * q))
            .sum()
    }

    pub fn probability_negative(&self, x: &[f64]) -> f64 {
        1.0 - self.probability_positive(x)
    }

    pub fn probabilities(&self, features: &Features) -> Vec<f64> {
        (0..features.len())
            .map(|i| self.probability_positive(features.row(i)))
            .collect()
    }
}
