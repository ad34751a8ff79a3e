use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("profile outside the cost domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error(
        "no connected graph after {attempts} draws with p = {p}; try a larger edge probability"
    )]
    GraphGeneration { attempts: usize, p: f64 },

    #[error("invalid exosystem: {0}")]
    InvalidExosystem(String),

    #[error("pair (D, S) is unobservable: observability rank {rank} < {expected}")]
    Unobservable { rank: usize, expected: usize },

    #[error("invalid pole set: {0}")]
    InvalidPoles(String),

    #[error("invalid agent law: {0}")]
    InvalidLaw(String),

    #[error("NE solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64, last_finite: Vec<f64> },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
