use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value out of supported range: {0}")]
    Range(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("partition is crossing: {0}")]
    Crossing(String),
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("series order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("series precondition violated: {0}")]
    Series(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("measure is not in M_*: first moment vanishes")]
    ZeroMean,
    #[error("{0}")]
    NonConvergence(Diagnostic),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Record left behind by a numerical solve, used both for error reporting
/// and for serializing solver quality into reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Diagnostic {
    pub solver: String,
    pub query: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
    pub flags: Vec<String>,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} did not converge at {}{:+}i: residual {:e} after {} iterations",
            self.solver, self.query[0], self.query[1], self.residual, self.iterations
        )?;
        if !self.flags.is_empty() {
            write!(f, " [{}]", self.flags.join(", "))?;
        }
        Ok(())
    }
}
