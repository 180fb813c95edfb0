//! One-shot experiment runs: split a dataset, train a probability
//! method, and emit one report row per held-out instance.
//!
//! Configuration is a flat key=value table. The same keys work from a
//! TOML file and from command-line overrides applied on top of it, so
//! a run is fully described by (file, overrides).

use std::path::Path;

use crate::calibrate::calibrate_thresholds;
use crate::csvm::{train_cebb2_ensemble, ConstraintTargets, CsvmSpec};
use crate::cv::{run_platt_split, NestedCvSettings};
use crate::dataset::{load_from_manifest, Dataset};
use crate::ensemble::{train_ensemble, EnsembleSettings, ParameterGrid};
use crate::error::{Error, Result};
use crate::preprocess::{preprocess, PreprocessPolicy};
use crate::report::ReportRow;
use crate::rng::derive_seed;
use crate::split::split_outer;

/// Probability method to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Bootstrap bank, grid values within the tolerance window vote.
    Ebb,
    /// Bank restricted to the accuracy-maximizing grid values.
    EbbBestTheta,
    /// Bank with thresholds calibrated toward a target true-positive
    /// rate on out-of-bag score medians.
    Cebb1,
    /// Bank whose replicates enforce the target rate during training.
    Cebb2,
    /// Inner-fold selection plus sigmoid fit on pooled held-out scores.
    PlattCv,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        match name {
            "ebb" => Ok(Method::Ebb),
            "ebb-best-theta" => Ok(Method::EbbBestTheta),
            "cebb1" => Ok(Method::Cebb1),
            "cebb2" => Ok(Method::Cebb2),
            "platt-cv" => Ok(Method::PlattCv),
            other => Err(Error::Config(format!(
                "unknown method {other:?}; expected ebb, ebb-best-theta, cebb1, cebb2, or platt-cv"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ebb => "ebb",
            Method::EbbBestTheta => "ebb-best-theta",
            Method::Cebb1 => "cebb1",
            Method::Cebb2 => "cebb2",
            Method::PlattCv => "platt-cv",
        })
    }
}

/// Which class's rate a constrained method targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetClass {
    Tpr,
    Tnr,
}

/// Full description of an experiment. Every field maps to one config
/// key of the same name.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Path to the dataset manifest file.
    pub dataset: String,
    pub method: Method,
    /// One independent run per seed.
    pub seeds: Vec<u64>,
    /// Held-out share of rows per run.
    pub fraction: f64,
    /// Per-class splitting.
    pub stratified: bool,
    /// Bootstrap replicates per grid value.
    pub replicates: usize,
    /// Accuracy window below the best grid value that still votes.
    pub epsilon: f64,
    pub grid: Vec<f64>,
    /// Rates for the constrained methods; plain methods ignore these.
    pub target_rates: Vec<f64>,
    pub target_class: TargetClass,
    pub standardize: bool,
    pub redraw_attempts: u32,
    /// Selection folds for the sigmoid baseline.
    pub inner_folds: usize,
    pub exact_limit: usize,
    pub big_m: f64,
    pub time_limit_secs: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            method: Method::Ebb,
            seeds: vec![0],
            fraction: 0.1,
            stratified: true,
            replicates: 500,
            epsilon: 0.05,
            grid: ParameterGrid::default_grid().values().to_vec(),
            target_rates: vec![0.0],
            target_class: TargetClass::Tpr,
            standardize: true,
            redraw_attempts: 5,
            inner_folds: 10,
            exact_limit: 200,
            big_m: 1000.0,
            time_limit_secs: 300.0,
        }
    }
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = value.split(',').map(|v| parse_one(key, v)).collect();
    let items = items?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key} must not be empty")));
    }
    Ok(items)
}

impl ExperimentConfig {
    /// Applies one `key=value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = value.to_string(),
            "method" => self.method = Method::parse(value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "fraction" => self.fraction = parse_one(key, value)?,
            "stratified" => self.stratified = parse_one(key, value)?,
            "replicates" => self.replicates = parse_one(key, value)?,
            "epsilon" => self.epsilon = parse_one(key, value)?,
            "grid" => self.grid = parse_list(key, value)?,
            "target_rates" => self.target_rates = parse_list(key, value)?,
            "target_class" => {
                self.target_class = match value {
                    "tpr" => TargetClass::Tpr,
                    "tnr" => TargetClass::Tnr,
                    other => {
                        return Err(Error::Config(format!(
                            "bad value {other:?} for target_class; expected tpr or tnr"
                        )))
                    }
                }
            }
            "standardize" => self.standardize = parse_one(key, value)?,
            "redraw_attempts" => self.redraw_attempts = parse_one(key, value)?,
            "inner_folds" => self.inner_folds = parse_one(key, value)?,
            "exact_limit" => self.exact_limit = parse_one(key, value)?,
            "big_m" => self.big_m = parse_one(key, value)?,
            "time_limit_secs" => self.time_limit_secs = parse_one(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a whole config file, starting from defaults. Arrays
    /// become comma lists, so `seeds = [1, 2]` and `seeds = "1,2"`
    /// mean the same thing.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut config = ExperimentConfig::default();
        for (key, value) in &table {
            config.apply(key, &flatten_value(key, value)?)?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(Error::Config("dataset path is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Config("fraction must lie in (0, 1)".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(
                "epsilon must be finite and nonnegative".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        ParameterGrid::new(self.grid.clone())?;
        for &rate in &self.target_rates {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("target rate {rate} outside [0, 1]")));
            }
        }
        if matches!(self.method, Method::Cebb1) && self.target_class == TargetClass::Tnr {
            return Err(Error::Config(
                "cebb1 calibrates the true-positive rate; use cebb2 for tnr targets".into(),
            ));
        }
        Ok(())
    }
}

fn flatten_value(key: &str, value: &toml::Value) -> Result<String> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>> = items.iter().map(|v| flatten_value(key, v)).collect();
            Ok(parts?.join(","))
        }
        _ => Err(Error::Config(format!("unsupported value type for {key}"))),
    }
}

/// Runs the configured experiment: one train/test split per seed, the
/// method's probabilities on the held-out rows, one report row per
/// (seed, target rate, instance).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let (manifest, data) = load_from_manifest(Path::new(&config.dataset))?;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        rows.extend(run_seed(&manifest.name, &data, config, seed)?);
    }
    Ok(rows)
}

/// One independent run. The seed splits the data and, separately
/// derived, seeds the method, so changing only the method never moves
/// the split.
pub fn run_seed(
    dataset_name: &str,
    data: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let split_seed = derive_seed(seed, &[0]);
    let method_seed = derive_seed(seed, &[1]);
    let (train_raw, valid_raw) = split_outer(data, config.fraction, config.stratified, split_seed)?;
    let grid = ParameterGrid::new(config.grid.clone())?;
    let policy = PreprocessPolicy {
        standardize: config.standardize,
    };

    let mut rows = Vec::new();
    let mut push = |rate: f64, ids: &[u64], labels: &[i8], probabilities: &[f64]| {
        for ((&id, &label), &probability) in ids.iter().zip(labels).zip(probabilities) {
            rows.push(ReportRow {
                dataset: dataset_name.to_string(),
                method: config.method.to_string(),
                seed,
                target_rate: rate,
                id,
                label,
                probability,
            });
        }
    };

    if config.method == Method::PlattCv {
        let settings = NestedCvSettings {
            grid,
            outer_folds: 2,
            inner_folds: config.inner_folds,
            seed: method_seed,
            policy,
        };
        let outcome =
            run_platt_split(&train_raw, &valid_raw, &settings)?.ok_or(Error::SingleClass)?;
        let ids: Vec<u64> = outcome.rows.iter().map(|r| r.id).collect();
        let labels: Vec<i8> = outcome.rows.iter().map(|r| r.label).collect();
        let probabilities: Vec<f64> = outcome.rows.iter().map(|r| r.probability).collect();
        push(0.0, &ids, &labels, &probabilities);
        return Ok(rows);
    }

    let (_, train, valid) = preprocess(&train_raw, &valid_raw, policy)?;
    let train_features = train.features()?;
    let train_labels = train.signed_labels("experiment training split")?;
    let valid_features = valid.features()?;
    let valid_labels = valid.signed_labels("experiment held-out split")?;
    let settings = EnsembleSettings {
        grid,
        n_replicates: config.replicates,
        redraw_attempts: config.redraw_attempts,
        seed: method_seed,
    };

    match config.method {
        Method::Ebb | Method::EbbBestTheta => {
            let bank = train_ensemble(&train_features, &train_labels, &settings)?;
            let epsilon = if config.method == Method::EbbBestTheta {
                0.0
            } else {
                config.epsilon
            };
            let predictor = bank.predictor(epsilon)?;
            let probabilities = predictor.probabilities(&valid_features);
            push(0.0, valid.ids(), &valid_labels, &probabilities);
        }
        Method::Cebb1 => {
            let bank = train_ensemble(&train_features, &train_labels, &settings)?;
            for &rate in &config.target_rates {
                let thresholds = calibrate_thresholds(&bank, &train_features, &train_labels, rate)?;
                let predictor = bank.predictor_with_thresholds(config.epsilon, thresholds)?;
                let probabilities = predictor.probabilities(&valid_features);
                push(rate, valid.ids(), &valid_labels, &probabilities);
            }
        }
        Method::Cebb2 => {
            let base = CsvmSpec {
                exact_limit: config.exact_limit,
                big_m: config.big_m,
                time_limit_secs: config.time_limit_secs,
                ..CsvmSpec::default()
            };
            for &rate in &config.target_rates {
                // Rate zero constrains nothing; the empty-targets path
                // reduces to the plain bank exactly.
                let targets = if rate == 0.0 {
                    ConstraintTargets::none()
                } else {
                    match config.target_class {
                        TargetClass::Tpr => ConstraintTargets {
                            tpr: Some(rate),
                            tnr: None,
                        },
                        TargetClass::Tnr => ConstraintTargets {
                            tpr: None,
                            tnr: Some(rate),
                        },
                    }
                };
                let bank = train_cebb2_ensemble(
                    &train_features,
                    &train_labels,
                    &settings,
                    &targets,
                    &base,
                )?;
                let predictor = bank.predictor(config.epsilon)?;
                let probabilities = predictor.probabilities(&valid_features);
                push(rate, valid.ids(), &valid_labels, &probabilities);
            }
        }
        Method::PlattCv => unreachable!("handled above"),
    }
    Ok(rows)
}
