use thiserror::Error;

/// Errors raised by construction, evaluation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parameter {name} = {value} outside admissible interval {interval}")]
    Parameter {
        name: &'static str,
        value: f64,
        interval: String,
    },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("non-finite iterate at k = {k}")]
    Diverged { k: usize, last_finite: Vec<f64> },

    #[error("unsupported by oracle: {0}")]
    Unsupported(String),

    #[error("objective unbounded below on the domain: {0}")]
    Unbounded(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("estimate error: {0}")]
    Estimate(String),

    #[error("unknown gallery entry {name:?}; available: {}", available.join(", "))]
    UnknownEntry {
        name: String,
        available: Vec<&'static str>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

pub(crate) fn check_finite(what: &str, x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Input(format!("{what}[{i}] is not finite"))),
    }
}
