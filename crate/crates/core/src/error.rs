use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kind mismatch: expected {expected}, found {found}")]
    Kind { expected: String, found: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The integrator produced a non-finite value.
    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite {
        step: u64,
        time: f64,
        last_finite: Vec<f64>,
    },

    #[error("degenerate fitting window: {0}")]
    DegenerateWindow(String),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Shape { what, expected, found }
    }

    pub(crate) fn kind(expected: impl ToString, found: impl ToString) -> Self {
        Error::Kind {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
