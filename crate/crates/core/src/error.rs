use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("p-value {value} at (variant {variant}, phenotype {phenotype}) is outside [0, 1]")]
    PValueOutOfRange {
        variant: usize,
        phenotype: usize,
        value: f64,
    },

    #[error("missing p-value at (variant {variant}, phenotype {phenotype}); dense input must be complete")]
    MissingValue { variant: usize, phenotype: usize },

    #[error("duplicate entry for (variant {variant}, phenotype {phenotype})")]
    DuplicateEntry { variant: usize, phenotype: usize },

    #[error("p-value {value} at (variant {variant}, phenotype {phenotype}) exceeds save threshold {threshold}")]
    AboveSaveThreshold {
        variant: usize,
        phenotype: usize,
        value: f64,
        threshold: f64,
    },

    #[error("index (variant {variant}, phenotype {phenotype}) outside a {n_variants}x{n_phenotypes} matrix")]
    IndexOutOfBounds {
        variant: usize,
        phenotype: usize,
        n_variants: usize,
        n_phenotypes: usize,
    },

    /// A rejection cutoff landed above the save threshold of censored input,
    /// so censored entries could have changed the outcome.
    #[error(
        "{stage}: rejection cutoff {cutoff:e} exceeds save threshold {threshold:e}; \
         lower the target level or rescan with a higher save threshold"
    )]
    SparseCutoff {
        stage: &'static str,
        cutoff: f64,
        threshold: f64,
    },

    #[error("{0} combiner cannot be applied to censored (sparse) input")]
    CensoredCombiner(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariates are rank deficient (column {0} is linearly dependent)")]
    RankDeficient(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by input data failing validation (as opposed to
    /// I/O trouble or sparse-cutoff violations).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::SparseCutoff { .. })
    }
}
