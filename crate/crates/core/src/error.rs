use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point left the domain of the mirror map (e.g. a zero coordinate under entropy).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {dim}: {reason}")]
    Dimension { dim: usize, reason: &'static str },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("cannot build a connected graph on {nodes} nodes with {edges} edges")]
    InfeasibleEdgeCount { nodes: usize, edges: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("mixing matrix rejected: {0}")]
    Assumptions(String),

    #[error("invalid step schedule: {0}")]
    Schedule(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
