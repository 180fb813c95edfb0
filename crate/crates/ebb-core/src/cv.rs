//! Nested cross-validation baseline: pick the regularization value by
//! inner-fold accuracy, fit the sigmoid on pooled inner held-out scores,
//! and report calibrated probabilities for each outer fold's held-out
//! rows.
//!
//! Preprocessing is fitted inside every training split it serves: each
//! inner fold fits its own transform on its own training rows, and the
//! final per-outer-fold model fits a fresh transform on the full outer
//! training split. No statistic ever sees its evaluation rows.

use crate::dataset::Dataset;
use crate::ensemble::ParameterGrid;
use crate::error::{Error, Result};
use crate::platt::{fit_sigmoid, SigmoidFit};
use crate::preprocess::{fit, PreprocessPolicy};
use crate::rng::derive_seed;
use crate::split::FoldPlan;
use crate::svm::{evaluate, train_svm, Metric, SvmModel};

#[derive(Clone, Debug)]
pub struct NestedCvSettings {
    pub grid: ParameterGrid,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub policy: PreprocessPolicy,
}

impl Default for NestedCvSettings {
    fn default() -> Self {
        NestedCvSettings {
            grid: ParameterGrid::default_grid(),
            outer_folds: 10,
            inner_folds: 10,
            seed: 0,
            policy: PreprocessPolicy::default(),
        }
    }
}

/// One held-out row's calibrated estimate.
#[derive(Clone, Copy, Debug)]
pub struct CvPrediction {
    pub id: u64,
    pub label: i8,
    pub score: f64,
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub best_grid_index: usize,
    pub sigmoid: SigmoidFit,
    pub model: SvmModel,
    pub rows: Vec<CvPrediction>,
    /// Inner folds dropped because their training rows held one class.
    pub skipped_inner_folds: usize,
}

#[derive(Clone, Debug)]
pub struct NestedCvReport {
    pub folds: Vec<FoldOutcome>,
    /// Outer folds dropped whole: single-class training split, or no
    /// usable inner estimates.
    pub skipped_outer_folds: Vec<usize>,
}

fn both_classes(labels: &[i8]) -> bool {
    labels.contains(&1) && labels.contains(&-1)
}

/// Runs the nested procedure on a labeled dataset.
pub fn run_nested_cv(data: &Dataset, settings: &NestedCvSettings) -> Result<NestedCvReport> {
    data.signed_labels("nested cross-validation")?;
    let outer = FoldPlan::new(data.len(), settings.outer_folds, settings.seed)?;
    let mut folds = Vec::new();
    let mut skipped_outer = Vec::new();

    for f in 0..outer.k() {
        match run_outer_fold(data, &outer, f, settings)? {
            Some(outcome) => folds.push(outcome),
            None => skipped_outer.push(f),
        }
    }
    if folds.is_empty() {
        return Err(Error::SingleClass);
    }
    Ok(NestedCvReport {
        folds,
        skipped_outer_folds: skipped_outer,
    })
}

fn run_outer_fold(
    data: &Dataset,
    outer: &FoldPlan,
    f: usize,
    settings: &NestedCvSettings,
) -> Result<Option<FoldOutcome>> {
    let train_rows = outer.training(f);
    let test_rows = outer.held_out(f);
    let raw_train = data.select_rows(&train_rows);
    let raw_test = data.select_rows(test_rows);
    let outcome = platt_split_core(
        &raw_train,
        &raw_test,
        derive_seed(settings.seed, &[f as u64]),
        settings,
    )?;
    Ok(outcome.map(|mut o| {
        o.fold = f;
        o
    }))
}

/// The inner-selection procedure on one fixed train/test split: pick
/// the grid value by inner-fold accuracy on `train`, fit the sigmoid on
/// pooled inner held-out scores, train the final model on all of
/// `train`, and calibrate `test`. `settings.outer_folds` is unused here;
/// `settings.seed` shuffles the inner folds. Returns `None` when the
/// split cannot support the procedure (single-class training rows, or
/// pooled scores that collapse to one class).
pub fn run_platt_split(
    train: &Dataset,
    test: &Dataset,
    settings: &NestedCvSettings,
) -> Result<Option<FoldOutcome>> {
    platt_split_core(train, test, settings.seed, settings)
}

fn platt_split_core(
    raw_train: &Dataset,
    raw_test: &Dataset,
    inner_seed: u64,
    settings: &NestedCvSettings,
) -> Result<Option<FoldOutcome>> {
    let train_labels = raw_train.signed_labels("sigmoid baseline training split")?;
    let test_labels = raw_test.signed_labels("sigmoid baseline evaluation split")?;
    if !both_classes(&train_labels) {
        return Ok(None);
    }

    // Inner loop: per-grid-value mean accuracy and pooled held-out
    // scores, every inner fold preprocessed from scratch.
    let inner = FoldPlan::new(raw_train.len(), settings.inner_folds, inner_seed)?;
    let mut accuracies: Vec<Vec<f64>> = vec![Vec::new(); settings.grid.len()];
    let mut pooled: Vec<Vec<(f64, i8)>> = vec![Vec::new(); settings.grid.len()];
    let mut skipped_inner = 0usize;
    for g in 0..inner.k() {
        let fit_rows = inner.training(g);
        let eval_rows = inner.held_out(g);
        let fit_labels: Vec<i8> = fit_rows.iter().map(|&r| train_labels[r]).collect();
        if !both_classes(&fit_labels) {
            skipped_inner += 1;
            continue;
        }
        let raw_fit = raw_train.select_rows(&fit_rows);
        let raw_eval = raw_train.select_rows(eval_rows);
        let transform = fit(&raw_fit, settings.policy);
        let fit_features = transform.apply(&raw_fit)?.features()?;
        let eval_features = transform.apply(&raw_eval)?.features()?;
        let eval_labels: Vec<i8> = eval_rows.iter().map(|&r| train_labels[r]).collect();
        for (j, &cost) in settings.grid.values().iter().enumerate() {
            let model = train_svm(&fit_features, &fit_labels, cost)?;
            let scores = model.scores(&eval_features)?;
            let preds: Vec<i8> = scores
                .iter()
                .map(|s| if *s >= 0.0 { 1 } else { -1 })
                .collect();
            let acc = evaluate(&preds, &eval_labels, Metric::Accuracy)?;
            accuracies[j].push(acc);
            pooled[j].extend(scores.iter().copied().zip(eval_labels.iter().copied()));
        }
    }

    // Mean accuracy selects the grid value; ties keep the lowest index.
    let mut best: Option<(usize, f64)> = None;
    for (j, accs) in accuracies.iter().enumerate() {
        if accs.is_empty() {
            continue;
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((j, mean));
        }
    }
    let (best_index, _) = match best {
        Some(b) => b,
        None => return Ok(None),
    };
    let (scores, score_labels): (Vec<f64>, Vec<i8>) = pooled[best_index].iter().copied().unzip();
    let sigmoid = match fit_sigmoid(&scores, &score_labels) {
        Ok(s) => s,
        // Pooled scores can hold one class when inner folds collapsed.
        Err(Error::SingleClass) => return Ok(None),
        Err(e) => return Err(e),
    };

    // Final model on the full outer training split, fresh transform.
    let transform = fit(raw_train, settings.policy);
    let train_features = transform.apply(raw_train)?.features()?;
    let test_features = transform.apply(raw_test)?.features()?;
    let model = train_svm(
        &train_features,
        &train_labels,
        settings.grid.values()[best_index],
    )?;
    let test_scores = model.scores(&test_features)?;
    let rows = raw_test
        .ids()
        .iter()
        .zip(&test_labels)
        .zip(&test_scores)
        .map(|((&id, &label), &score)| CvPrediction {
            id,
            label,
            score,
            probability: sigmoid.probability(score),
        })
        .collect();
    Ok(Some(FoldOutcome {
        fold: 0,
        best_grid_index: best_index,
        sigmoid,
        model,
        rows,
        skipped_inner_folds: skipped_inner,
    }))
}
