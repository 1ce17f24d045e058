use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of an error, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad or missing input data.
    Data,
    /// A numerical failure (singular system, non-convergence, ...).
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{dataset}: parse error at line {line}, column {column}: {message}")]
    Parse {
        dataset: &'static str,
        line: u64,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("referential error: {0}")]
    Reference(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("empty variogram: no point pairs within {max_dist} km")]
    EmptyVariogram { max_dist: f64 },

    #[error("variogram fit did not converge after {iterations} iterations (last iterate sigma2={sigma2}, tau2={tau2})")]
    Fit {
        iterations: usize,
        sigma2: f64,
        tau2: f64,
    },

    #[error("cannot normalize surface: {0}")]
    Normalization(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("empty selection: no captives sold at {0}")]
    EmptySelection(String),

    #[error("year {year}: nodes with no path to a point of sale: {}", stranded.join(", "))]
    Connectivity { year: i32, stranded: Vec<String> },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("augmentation error: {0}")]
    Augmentation(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("year {0}: no active conflicts")]
    EmptyYear(i32),

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("year {year}{}: {source}", captive.map(|c| format!(", captive {c}")).unwrap_or_default())]
    Stage {
        year: i32,
        captive: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Numerical(_)
            | Error::Fit { .. }
            | Error::Solver(_)
            | Error::Normalization(_) => ErrorCategory::Numeric,
            Error::Stage { source, .. } => source.category(),
            _ => ErrorCategory::Data,
        }
    }

    /// Attach the year (and optionally the captive index) at which a stage failed.
    pub fn at(self, year: i32, captive: Option<usize>) -> Error {
        match self {
            e @ (Error::Stage { .. } | Error::EmptyYear(_)) => e,
            e => Error::Stage {
                year,
                captive,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
