use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("contour touches spectrum near z = {re} {im:+}i")]
    ContourTouchesSpectrum { re: f64, im: f64 },
    #[error("branch ambiguity at z = {re} {im:+}i")]
    BranchAmbiguity { re: f64, im: f64 },
    #[error("contour needs refinement: {0}")]
    RefineContour(String),
    #[error("newton iteration did not converge after {} iterates", trace.len())]
    NoConvergence { trace: Vec<num_complex::Complex64> },
    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),
    #[error("no candidate eigenvalues in target spectrum")]
    NoCandidates,
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("quasimodes not stably independent: gram smallest singular value {sigma_min:e} < {threshold:e}")]
    IndependenceViolated { sigma_min: f64, threshold: f64 },
}
