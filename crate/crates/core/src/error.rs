use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("invalid spatial grid: {0}")]
    SpaceGrid(String),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("singular Jacobian at node {node}: p f'(u) - q + d + shift = {pivot:e} degenerates")]
    SingularJacobian { node: usize, pivot: f64 },

    #[error("Newton stagnated after {iterations} iterations (residual {residual:e})")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("blow-up suspected at step {step}: max |u| = {max_abs:e}")]
    BlowUp { step: usize, max_abs: f64 },

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("expression `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("plot: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
