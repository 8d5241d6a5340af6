use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("manifest mismatch: vectors built on manifest {left} and manifest {right}")]
    ManifestMismatch { left: String, right: String },

    #[error("undefined cosine for zero vector")]
    ZeroVector,

    #[error("class `{0}` has a zero embedding; cosine distance is undefined")]
    ZeroEmbedding(String),

    #[error("duplicate id `{0}`")]
    Duplicate(String),

    #[error("negative threshold {0}")]
    NegativeThreshold(f64),

    #[error("invalid vector entry: {0}")]
    InvalidEntry(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("unknown layer group `{0}`")]
    UnknownGroup(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot aggregate an empty list of images")]
    EmptyAggregation,

    #[error("unknown class id `{0}`")]
    UnknownClass(String),

    #[error("unknown synset `{0}`")]
    UnknownSynset(String),

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("information content undefined for synset `{0}` (zero cumulative count)")]
    UndefinedInformationContent(String),

    #[error("information-content measure requires a counts table")]
    MissingInformationContent,

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("too few classes for evaluation: {0} (need at least 3)")]
    TooFewClasses(usize),

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("eigen-solver residual {residual:e} exceeds bound {bound:e}")]
    EigenResidual { residual: f64, bound: f64 },

    #[error("neighborhood graph is disconnected; component sizes: {sizes:?}")]
    DisconnectedGraph { sizes: Vec<usize> },

    #[error("empty difference: operands are feature-wise dominated")]
    EmptyDifference,

    #[error("invalid equation: {0}; expected `A - B` or `C - (A - B)`")]
    EquationSyntax(String),

    #[error("invalid generator spec: {0}")]
    Generator(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
