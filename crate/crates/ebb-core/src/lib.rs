//! Probability estimates for linear margin classifiers via bootstrap
//! ensembles, with cost-sensitive threshold calibration and constrained
//! training.
//!
//! The pipeline: load a labeled dataset, fit preprocessing on the
//! training split, train a bank of classifiers on bootstrap replicates
//! across a regularization grid, weight grid values by out-of-bag
//! accuracy, and read class probabilities off the ensemble's vote. On
//! top of that sit threshold calibration toward target true-positive or
//! true-negative rates, a constrained trainer that enforces those rates
//! on the training sample exactly, a sigmoid-fit baseline, and the
//! experiment plumbing to compare them.

pub mod bank;
pub mod calibrate;
pub mod csvm;
pub mod cv;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod model_io;
pub mod platt;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod smo;
pub mod split;
pub mod svm;

pub use bank::{load_bank, save_bank, SavedBank};
pub use calibrate::{calibrate_thresholds, threshold_from_medians};
pub use csvm::{
    train_cebb2_ensemble, train_csvm, Certificate, ConstraintTargets, CsvmOutcome, CsvmSpec,
    SolveMode,
};
pub use cv::{
    run_nested_cv, run_platt_split, CvPrediction, FoldOutcome, NestedCvReport, NestedCvSettings,
};
pub use dataset::{
    load_csv, load_csv_unlabeled, load_from_manifest, Cell, Column, ColumnKind, Dataset,
    DatasetManifest, Features,
};
pub use ensemble::{
    reliability_weights, train_ensemble, EnsembleBank, EnsemblePredictor, EnsembleSettings,
    ParameterGrid, Replicate, ReplicateStatus,
};
pub use error::{Error, Result};
pub use experiment::{run_experiment, run_seed, ExperimentConfig, Method, TargetClass};
pub use platt::{fit_sigmoid, SigmoidFit};
pub use preprocess::{fit, preprocess, FittedTransform, PreprocessPolicy};
pub use report::{mean_squared_error, median, read_report, write_report, ClassFilter, ReportRow};
pub use split::{bootstrap_sample, split_outer, BootstrapSample, FoldPlan};
pub use svm::{evaluate, train_svm, Metric, SvmModel, TrainingDiagnostics};
