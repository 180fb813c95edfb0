use thiserror::Error;

/// Errors produced by dataset handling, training, and experiment plumbing.
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("manifest error in {path}: {message}")]
    Manifest { path: String, message: String },

    #[error("label column {column:?} has unmapped value {value:?} at row {row}")]
    BadLabel {
        column: String,
        value: String,
        row: usize,
    },

    #[error("dataset has no column named {0:?}")]
    NoSuchColumn(String),

    #[error("column {column:?} row {row}: {message}")]
    BadCell {
        column: String,
        row: usize,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dataset is not fully numeric: column {0:?} still categorical or missing")]
    NotNumeric(String),

    #[error("{context}: dataset has rows without labels")]
    Unlabeled { context: String },

    #[error("{context}: needs at least {needed} rows, got {got}")]
    TooFewRows {
        context: String,
        needed: usize,
        got: usize,
    },

    #[error("training set contains a single class; no feasible dual direction")]
    SingleClass,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("grid index {index} out of range ({len} grid values)")]
    GridIndex { index: usize, len: usize },

    #[error("no grid value has a usable out-of-bag estimate: {0}")]
    NoUsableReplicates(String),

    #[error("metric {metric} undefined: {message}")]
    MetricUndefined { metric: String, message: String },

    #[error("constrained training is infeasible: {0}")]
    Infeasible(String),

    #[error("time limit reached with no feasible solution found")]
    NoIncumbent,

    #[error("model file {path}: {message}")]
    ModelFormat { path: String, message: String },

    #[error("bank directory {path}: {message}")]
    Bank { path: String, message: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable tag for each variant, used by error
    /// records emitted on the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Manifest { .. } => "manifest",
            Error::BadLabel { .. } => "bad_label",
            Error::NoSuchColumn(_) => "no_such_column",
            Error::BadCell { .. } => "bad_cell",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::NotNumeric(_) => "not_numeric",
            Error::Unlabeled { .. } => "unlabeled",
            Error::TooFewRows { .. } => "too_few_rows",
            Error::SingleClass => "single_class",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::GridIndex { .. } => "grid_index",
            Error::NoUsableReplicates(_) => "no_usable_replicates",
            Error::MetricUndefined { .. } => "metric_undefined",
            Error::Infeasible(_) => "infeasible",
            Error::NoIncumbent => "no_incumbent",
            Error::ModelFormat { .. } => "model_format",
            Error::Bank { .. } => "bank",
            Error::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            message: message.into(),
        }
    }
}
