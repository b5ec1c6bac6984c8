use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{species}: temperature {t} K outside valid range [{t_min}, {t_max}]")]
    TemperatureRange {
        species: String,
        t: f64,
        t_min: f64,
        t_max: f64,
    },

    #[error("degenerate mixture: mass fractions sum to zero")]
    DegenerateMixture,

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("{origin}, line {line}: {reason}")]
    Data {
        origin: String,
        line: usize,
        reason: String,
    },

    #[error("integration diverged at t = {t:e} s (step {step}, stage {stage})")]
    Diverged { t: f64, step: usize, stage: usize },

    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no active tape on this thread")]
    NoActiveTape,

    #[error("a tape is already active on this thread")]
    TapeBusy,

    #[error("variable does not belong to the active tape")]
    ForeignVariable,

    #[error("non-finite gradient for sample {sample}")]
    NonFiniteGradient { sample: usize },

    #[error("{path}: {source}", path = path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the index of the sample that produced it.
    pub fn in_sample(self, sample: usize) -> Self {
        match self {
            e @ Error::Sample { .. } => e,
            e => Error::Sample {
                sample,
                source: Box::new(e),
            },
        }
    }
}
