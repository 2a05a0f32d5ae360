use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud has zero total mass")]
    ZeroMass,

    #[error("point cloud must contain at least one point")]
    EmptyCloud,

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("total mass {mass} exceeds 1 (sub-probability measure required)")]
    MassExceeded { mass: f64 },

    #[error("point modes differ: {0}")]
    ModeMismatch(String),

    #[error("cloud is not normalized (mass {mass}, expected 1)")]
    NotNormalized { mass: f64 },

    #[error("base kernel cannot evaluate these points: {0}")]
    Mode(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight mismatch: {0}")]
    WeightMismatch(String),

    #[error("matrix is not symmetric (max |K - K^T| = {max_deviation:e})")]
    Asymmetry { max_deviation: f64 },

    #[error("centered Gram matrix is not positive semidefinite (eigenvalue {min_eigenvalue:e} below -{threshold:e})")]
    NotPsd { min_eigenvalue: f64, threshold: f64 },

    #[error("variance matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("spectrum must lie strictly below 1 (largest eigenvalue {max_eigenvalue})")]
    SpectrumTooLarge { max_eigenvalue: f64 },

    #[error("too many compositions to enumerate ({compositions})")]
    Complexity { compositions: u128 },

    #[error("series did not converge within {terms} terms (last term {last_term:e})")]
    NonConvergence { terms: usize, last_term: f64 },

    #[error("delta {delta} too large: estimated spectral radius {rho:.6e}, delta*rho = {product:.6} (need < 1)")]
    DeltaTooLarge { delta: f64, rho: f64, product: f64 },

    #[error("base kernel is not bounded by one; the delta bound does not apply")]
    UnboundedKernel,

    #[error("kernel evaluation failed for pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("image has no pixel above the ink threshold")]
    EmptyImage,

    #[error("SMO solver did not converge after {iterations} pair updates")]
    SolverDivergence { iterations: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to malformed
    /// input. The command-line front end maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPsd { .. }
            | Error::Singular { .. }
            | Error::SpectrumTooLarge { .. }
            | Error::Complexity { .. }
            | Error::NonConvergence { .. }
            | Error::DeltaTooLarge { .. }
            | Error::UnboundedKernel
            | Error::SolverDivergence { .. }
            | Error::Mode(_)
            | Error::NotNormalized { .. }
            | Error::ModeMismatch(_) => true,
            Error::Pair { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
