use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix at {location}: {detail}")]
    SingularMatrix { location: String, detail: String },

    /// Evaluation point coincides with a singularity.
    #[error("evaluation point coincides with the singularity ({0})")]
    Singularity(String),

    #[error("ellipticity violated at node {node}: {detail}")]
    Ellipticity { node: usize, detail: String },

    #[error("grid with {requested} nodes exceeds the configured cap of {cap}")]
    MemoryBudget { requested: usize, cap: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("solve residual {achieved:.3e} above tolerance {tolerance:.3e}")]
    ResidualNotMet { achieved: f64, tolerance: f64 },

    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("power iteration did not converge after {iterations} iterations (last Rayleigh quotients {history:?})")]
    NoConvergence { iterations: usize, history: Vec<f64> },

    #[error("quadrature budget exceeded: achieved relative tolerance {achieved:.3e}, requested {requested:.3e}")]
    QuadratureBudget { achieved: f64, requested: f64 },

    #[error("wave number k = {k} is not admissible (need 0 < k <= {k0} or k >= {k0_tilde})")]
    InadmissibleWaveNumber { k: f64, k0: f64, k0_tilde: f64 },

    #[error("medium is only C^{available}-smooth near the boundary, order {requested} requested")]
    Smoothness { available: u32, requested: u32 },

    #[error("stencil leaves the domain")]
    StencilOutOfDomain,

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Configuration validation failure, with a JSON pointer to the offending value.
    #[error("invalid configuration at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("expression parse error at offset {offset}: {message}")]
    Expr { offset: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by invalid user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Expr { .. } | Error::Json(_) | Error::Format(_)
        )
    }
}
