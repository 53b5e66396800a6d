use thiserror::Error;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("pole at {0}")]
    Pole(String),
    #[error("unsupported: {0}")]
    Capability(String),
    #[error("requested accuracy unattainable: achieved bound {achieved:e}")]
    Accuracy { achieved: f64 },
    #[error("routing error: {0}")]
    Routing(String),
    #[error("singular point x = {x}")]
    Singularity { x: f64 },
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("quadrature error: {nudged} of {total} nodes hit singularities")]
    Quadrature { nudged: usize, total: usize },
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    Iteration { iterations: usize, residual: f64 },
    #[error("perturbation range exceeded: {0}")]
    PerturbationRange(String),
    #[error("Monte Carlo standard error {achieved:e} exceeds tolerance {tolerance:e}")]
    Sampling { achieved: f64, tolerance: f64 },
    #[error("budget exceeded: {requested} > {budget}")]
    Budget { requested: u64, budget: u64 },
    #[error("tail bias: {rejected} of {draws} draws rejected")]
    TailBias { rejected: u64, draws: u64 },
    #[error("degenerate variance {sigma2:e} (coboundary suspected)")]
    Degenerate { sigma2: f64 },
    #[error("no Green-Kubo plateau within {k_max} lags (partial sum {partial})")]
    Truncation { k_max: usize, partial: f64 },
    #[error("|t| = {t:e} exceeds t_max")]
    TailRejected { t: f64 },
    #[error("only {effective} samples inside the test window")]
    Variance { effective: usize },
}

impl Error {
    /// True for errors caused by numerics rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Accuracy { .. }
                | Error::Precision(_)
                | Error::Quadrature { .. }
                | Error::Iteration { .. }
                | Error::PerturbationRange(_)
                | Error::Sampling { .. }
                | Error::TailBias { .. }
                | Error::Degenerate { .. }
                | Error::Truncation { .. }
                | Error::Variance { .. }
                | Error::Resolution(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
