use std::fmt;

use thiserror::Error;

/// Broad failure classes, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data or configuration.
    Data,
    /// A numerical procedure failed (decomposition, convergence, identification).
    Numeric,
    /// Filesystem or serialization failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("collinear design: column(s) {} are linearly dependent on earlier columns", .columns.join(", "))]
    Collinearity { columns: Vec<String> },

    #[error("perfect or quasi-complete separation: |{column}| reached {value:.3}")]
    Separation { column: String, value: f64 },

    #[error("probit did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("design mismatch: expected {expected} columns, found {found}")]
    DesignMismatch { expected: usize, found: usize },

    #[error("overlap violation: propensity {value} at row {row} is not strictly inside (0, 1)")]
    OverlapViolation { row: usize, value: f64 },

    #[error("weak identification: endogenous covariate(s) {} look normal (AD and CvM p >= 0.05)", .columns.join(", "))]
    WeakIdentification { columns: Vec<String> },

    #[error("invalid rho {rho} for scenario {scenario}: latent covariance is not positive definite")]
    InvalidRho { scenario: u8, rho: f64 },

    #[error("intercept calibration failed: {0}")]
    Calibration(String),

    #[error("bootstrap unreliable: {failed} of {requested} replicates failed ({breakdown})")]
    InferenceUnreliable {
        failed: usize,
        requested: usize,
        breakdown: FailureBreakdown,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("degenerate study: {0}")]
    DegenerateStudy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::Degenerate(_)
            | Error::Dimension(_)
            | Error::DesignMismatch { .. }
            | Error::OverlapViolation { .. }
            | Error::InvalidRho { .. }
            | Error::Config(_)
            | Error::Parse(_)
            | Error::DegenerateStudy(_)
            | Error::WeakIdentification { .. } => ErrorClass::Data,
            Error::NotPositiveDefinite { .. }
            | Error::Collinearity { .. }
            | Error::Separation { .. }
            | Error::Convergence { .. }
            | Error::Calibration(_)
            | Error::InferenceUnreliable { .. } => ErrorClass::Numeric,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorClass::Io,
        }
    }

    /// Short tag used when tallying replicate failures.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Separation { .. } => "separation",
            Error::Collinearity { .. } => "collinearity",
            Error::Convergence { .. } => "convergence",
            Error::OverlapViolation { .. } => "overlap",
            Error::DegenerateStudy(_) | Error::Degenerate(_) => "degenerate",
            Error::WeakIdentification { .. } => "weak_identification",
            _ => "other",
        }
    }
}

/// Counts of failed replicates by cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct FailureBreakdown(pub std::collections::BTreeMap<String, usize>);

impl FailureBreakdown {
    pub fn record(&mut self, err: &Error) {
        *self.0.entry(err.tag().to_string()).or_insert(0) += 1;
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

impl fmt::Display for FailureBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "none");
        }
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
