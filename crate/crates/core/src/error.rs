use chrono::NaiveDate;
use thiserror::Error;

/// Errors produced by data ingestion, model construction and solving.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a precondition (non-finite input, length mismatch, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A day in a price file is structurally broken (missing/duplicated hours).
    #[error("schema error on {day}: {detail}")]
    Schema { day: NaiveDate, detail: String },

    /// A cell in an input file could not be parsed.
    #[error("parse error at row {row}: {detail}")]
    Parse { row: usize, detail: String },

    /// Filesystem trouble while reading or writing an artifact.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// The solver backend failed or proved the model infeasible/unbounded.
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Outcome classification for a failed solve.
#[derive(Debug, Error)]
pub enum SolveError {
    /// The model admits no feasible point. `hint` names the constraint
    /// family most likely responsible.
    #[error("model infeasible (likely cause: {hint})")]
    Infeasible { hint: String },

    #[error("model unbounded")]
    Unbounded,

    /// The time limit elapsed before any incumbent was found.
    #[error("time limit of {limit_s} s reached with no incumbent")]
    TimeoutNoIncumbent { limit_s: f64 },

    /// The backend returned something we cannot interpret.
    #[error("solver backend failure: {0}")]
    Backend(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
