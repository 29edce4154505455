use thiserror::Error;

/// Errors from the statistical pipeline.
///
/// `Data` covers invalid inputs (empty samples, bad parameters); `Numerical`
/// covers failures inside a computation stage (factorization, A1 violation),
/// tagged with the stage that raised them so callers can report where a
/// pipeline died.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample{}", label_suffix(.0))]
    EmptySample(Option<String>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample has fewer than {required} distinct event times")]
    TooFewEvents { required: usize },

    #[error("no events in pooled sample")]
    NoEvents,

    #[error("zero variance: weighted log-rank variance sum is 0")]
    ZeroVariance,

    #[error("grid mismatch between covariance inputs")]
    GridMismatch,

    #[error(
        "A1 violation: plug-in survival non-positive over {nonpositive} of {total} integration points"
    )]
    A1Violation { nonpositive: usize, total: usize },

    #[error("factorization failed: jitter {jitter:.3e} exceeded cap {cap:.3e}")]
    FactorizationFailed { jitter: f64, cap: f64 },

    #[error("dimension {0} exceeds the MVN limit of {1}")]
    DimensionTooLarge(usize, usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replications failed (>{limit_percent}% tolerated); first: {first}")]
    ReplicationFailures {
        failed: usize,
        total: usize,
        limit_percent: f64,
        first: String,
    },
}

fn label_suffix(label: &Option<String>) -> String {
    match label {
        Some(l) => format!(" ({l})"),
        None => String::new(),
    }
}

impl Error {
    /// Wrap an error with the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
