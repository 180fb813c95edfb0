//! `ebb`: train ensemble banks, calibrate vote thresholds, predict
//! class probabilities, score reports, and drive full experiments from
//! a flat key=value config.
//!
//! Every run is deterministic in (inputs, config). On failure the
//! process exits nonzero after printing a one-line JSON error record to
//! stderr, so scripted callers never have to parse prose.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ebb_core::{
    calibrate_thresholds, fit, load_bank, load_csv_unlabeled, load_from_manifest,
    mean_squared_error, read_report, run_experiment, save_bank, train_ensemble, write_report,
    ClassFilter, DatasetManifest, EnsembleSettings, Error, ExperimentConfig, ParameterGrid,
    PreprocessPolicy, ReportRow, Result, SavedBank,
};

#[derive(Parser)]
#[command(
    name = "ebb",
    version,
    about = "Bootstrap-ensemble probability estimation for margin classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a replicate bank on a full labeled dataset and persist it.
    Train(TrainArgs),
    /// Compute calibrated vote thresholds from a persisted bank.
    Calibrate(CalibrateArgs),
    /// Emit positive-class probabilities for a CSV of instances.
    Predict(PredictArgs),
    /// Summarize a probability report into MSE tables.
    Evaluate(EvaluateArgs),
    /// Run the full split/train/predict pipeline from a config.
    Experiment(ExperimentArgs),
    /// Dump one instance's per-replicate scores for histogramming.
    ExportScores(ExportScoresArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Flat key=value config file; `dataset`, `grid`, `replicates`,
    /// `standardize`, `redraw_attempts`, and the first `seeds` entry
    /// drive training.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Directory the bank is written to.
    #[arg(long)]
    bank: PathBuf,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    /// Directory of a persisted bank.
    #[arg(long)]
    bank: PathBuf,
    /// Target rate of covered training positives, in [0, 1].
    #[arg(long)]
    rate: f64,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Directory of a persisted bank.
    #[arg(long)]
    bank: PathBuf,
    /// Dataset manifest describing the instance CSV's schema.
    #[arg(long)]
    manifest: PathBuf,
    /// Instance rows; the label column may be absent or unfilled.
    #[arg(long)]
    csv: PathBuf,
    /// Calibration target rate; 0 leaves vote thresholds at zero.
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
    /// Out-of-bag accuracy window for grid-value reweighting.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    /// Probability report produced by `experiment`.
    #[arg(long)]
    report: PathBuf,
    /// Which rows enter the mean squared error.
    #[arg(long, value_enum, default_value_t = ClassChoice::All)]
    class: ClassChoice,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Flat key=value config file; omit to build purely from --set.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Report CSV the probability rows are written to.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct ExportScoresArgs {
    /// Directory of a persisted bank.
    #[arg(long)]
    bank: PathBuf,
    /// Dataset manifest describing the instance CSV's schema.
    #[arg(long)]
    manifest: PathBuf,
    /// Instance rows; the label column may be absent or unfilled.
    #[arg(long)]
    csv: PathBuf,
    /// Row id of the instance to score (first row is 0).
    #[arg(long)]
    id: u64,
    /// Index into the bank's regularization grid.
    #[arg(long)]
    theta_index: usize,
    /// CSV of (replicate, score) rows.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassChoice {
    All,
    Positives,
    Negatives,
}

impl ClassChoice {
    fn filter(self) -> ClassFilter {
        match self {
            ClassChoice::All => ClassFilter::All,
            ClassChoice::Positives => ClassFilter::Positives,
            ClassChoice::Negatives => ClassFilter::Negatives,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ClassChoice::All => "all",
            ClassChoice::Positives => "positives",
            ClassChoice::Negatives => "negatives",
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        let record = serde_json::json!({
            "error": { "kind": e.kind(), "message": e.to_string() }
        });
        eprintln!("{record}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => train(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Predict(args) => predict(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Experiment(args) => experiment(args),
        Command::ExportScores(args) => export_scores(args),
    }
}

/// Builds the config from an optional file plus --set overrides; the
/// file and the flags share one key space.
fn load_config(path: Option<&Path>, sets: &[String]) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for pair in sets {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {pair:?} is not of the form key=value"))
        })?;
        config.apply(key.trim(), value.trim())?;
    }
    Ok(config)
}

fn write_or_stdout(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        }),
        None => std::io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "stdout".into(),
            source: e,
        }),
    }
}

/// Trains on every labeled row of the manifest dataset; the holdout
/// machinery belongs to `experiment`, not here.
fn train(args: TrainArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), &args.sets)?;
    config.validate()?;
    let (_, data) = load_from_manifest(Path::new(&config.dataset))?;

    let policy = PreprocessPolicy {
        standardize: config.standardize,
    };
    let transform = fit(&data, policy);
    let train = transform.apply(&data)?;
    let features = train.features()?;
    let labels = train.signed_labels("training data")?;
    let settings = EnsembleSettings {
        grid: ParameterGrid::new(config.grid.clone())?,
        n_replicates: config.replicates,
        redraw_attempts: config.redraw_attempts,
        seed: config.seeds[0],
    };
    let bank = train_ensemble(&features, &labels, &settings)?;
    save_bank(
        &args.bank,
        &SavedBank {
            bank,
            transform,
            features,
            labels,
            ids: train.ids().to_vec(),
        },
    )
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let saved = load_bank(&args.bank)?;
    let thresholds = calibrate_thresholds(&saved.bank, &saved.features, &saved.labels, args.rate)?;
    let mut text = String::from("theta,threshold\n");
    for (theta, threshold) in saved.bank.grid.values().iter().zip(&thresholds) {
        text.push_str(&format!("{theta},{threshold}\n"));
    }
    write_or_stdout(args.out.as_deref(), text.as_bytes())
}

fn predict(args: PredictArgs) -> Result<()> {
    let saved = load_bank(&args.bank)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let raw = load_csv_unlabeled(&args.csv, &manifest)?;
    let instances = saved.transform.apply(&raw)?;

    let thresholds = calibrate_thresholds(&saved.bank, &saved.features, &saved.labels, args.rate)?;
    let predictor = saved
        .bank
        .predictor_with_thresholds(args.epsilon, thresholds)?;
    let probabilities = predictor.probabilities(&instances.features()?);

    let mut text = String::from("id,probability\n");
    for (&id, p) in instances.ids().iter().zip(&probabilities) {
        text.push_str(&format!("{id},{p}\n"));
    }
    write_or_stdout(args.out.as_deref(), text.as_bytes())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let rows = read_report(&args.report)?;
    // Group key orders the table by dataset, method, rate, then seed;
    // rates are nonnegative so their bit patterns sort numerically.
    let mut groups: std::collections::BTreeMap<(String, String, u64, u64), Vec<ReportRow>> =
        std::collections::BTreeMap::new();
    for row in rows {
        groups
            .entry((
                row.dataset.clone(),
                row.method.clone(),
                row.target_rate.to_bits(),
                row.seed,
            ))
            .or_default()
            .push(row);
    }

    let filter = args.class.filter();
    let mut text = String::from("dataset,method,target_rate,seed,class,rows,mse\n");
    for ((dataset, method, rate_bits, seed), group) in &groups {
        let rate = f64::from_bits(*rate_bits);
        let kept = group.iter().filter(|r| filter.keeps(r.label)).count();
        let mse = if kept == 0 {
            String::new()
        } else {
            format!("{}", mean_squared_error(group, filter)?)
        };
        text.push_str(&format!(
            "{dataset},{method},{rate},{seed},{},{kept},{mse}\n",
            args.class.name()
        ));
    }
    write_or_stdout(args.out.as_deref(), text.as_bytes())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), &args.sets)?;
    let rows = run_experiment(&config)?;
    write_report(&args.out, &rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn export_scores(args: ExportScoresArgs) -> Result<()> {
    let saved = load_bank(&args.bank)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let raw = load_csv_unlabeled(&args.csv, &manifest)?;
    let instances = saved.transform.apply(&raw)?;
    let row = instances
        .row_by_id(args.id)
        .ok_or_else(|| Error::SchemaMismatch(format!("no row with id {}", args.id)))?;
    let x = instances.features()?;
    let x = x.row(row);

    let replicates = saved
        .bank
        .replicates
        .get(args.theta_index)
        .ok_or(Error::GridIndex {
            index: args.theta_index,
            len: saved.bank.grid.len(),
        })?;

    // One row per replicate that holds a model; failures appear only in
    // the bank's accuracy table.
    let mut text = String::from("replicate,score\n");
    let mut voting = 0usize;
    let mut positive = 0usize;
    for (b, replicate) in replicates.iter().enumerate() {
        if let Some(model) = &replicate.model {
            let score = model.score(x);
            voting += 1;
            if score >= 0.0 {
                positive += 1;
            }
            text.push_str(&format!("{b},{score}\n"));
        }
    }
    std::fs::write(&args.out, text.as_bytes()).map_err(|e| Error::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;

    if voting == 0 {
        return Err(Error::NoUsableReplicates(format!(
            "grid index {} has no trained replicates",
            args.theta_index
        )));
    }
    println!("replicates={voting}");
    println!("positive_share={}", positive as f64 / voting as f64);
    Ok(())
}
