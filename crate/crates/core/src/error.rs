use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile must lie strictly inside (0, 1), got {0}")]
    QuantileDomain(f64),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("rank-deficient design: column `{column}` is collinear with {others:?}")]
    RankDeficient { column: String, others: Vec<String> },

    #[error("solver did not converge after {iterations} iterations (objective {objective:.6e}, gap {gap:.3e})")]
    NoConvergence {
        iterations: usize,
        objective: f64,
        gap: f64,
        best: Vec<f64>,
    },

    #[error("oracle refuses instance with {n} rows (cap {cap})")]
    OracleCap { n: usize, cap: usize },

    #[error("bootstrap: {degenerate} of {attempts} resamples were degenerate")]
    BootstrapDegenerate { degenerate: usize, attempts: usize },

    #[error("no within variation: every group is a singleton")]
    NoWithinVariation,

    #[error("too many groups for indicator mode ({groups} > cap {cap}); use penalized mode")]
    TooManyGroups { groups: usize, cap: usize },

    #[error("missing corporate tax rate for fiscal year {0}")]
    MissingTaxRate(i32),

    #[error("missing macro data for fiscal year {0}")]
    MissingMacro(i32),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("not enough observations: {0}")]
    InsufficientData(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::QuantileDomain(theta))
    }
}
