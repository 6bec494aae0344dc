use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("index k={k} outside [0, {n}]")]
    Domain { n: usize, k: usize },

    #[error("polynomial is identically zero")]
    ZeroPolynomial,

    #[error("invalid interval [{lo}, {hi}] or tolerance {tol}")]
    InvalidInterval { lo: f64, hi: f64, tol: f64 },

    #[error("invalid node set: {0}")]
    InvalidNodes(String),

    #[error("invalid atomic measure: {0}")]
    InvalidMeasure(String),

    #[error("node set must be strictly increasing")]
    NotStrictlyIncreasing,

    #[error("maxima certification failed: {0}")]
    Certification(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best_nodes: Vec<f64>,
    },

    #[error("atom at {atom} coincides with node a_{k} (only a subgradient exists)")]
    AtomOnNode { atom: f64, k: usize },

    #[error("stationarity system is rank deficient (null-space dimension {nullity})")]
    RankDeficient { nullity: usize },

    #[error("expected {expected} support points, found {found}")]
    SupportCount { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Serialization or I/O failure while writing a report.
    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
