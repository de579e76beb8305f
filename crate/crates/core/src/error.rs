use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Variants are grouped by the module that raises them; [`Error::module`]
/// reports that attribution for the command-line harness.
#[derive(Debug, Error)]
pub enum Error {
    // monotone calculus
    #[error("monotonicity violated: {0}")]
    MonotonicityViolation(String),
    #[error("function does not escape to infinity: {0}")]
    CoercivityViolation(String),
    #[error("quadrature failed to reach tolerance on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64 },
    #[error("regularity violated: {0}")]
    RegularityViolation(String),

    // grid domain
    #[error("invalid grid or input: {0}")]
    InvalidSpec(String),
    #[error("linear solver failed: {0}")]
    SolverFailure(String),
    #[error("fields live on different grids")]
    GridMismatch,

    // spectral
    #[error("eigen-iteration did not converge (residual {residual:e})")]
    ConvergenceFailure { residual: f64 },
    #[error("weight has non-positive mass {0:e}")]
    MassViolation(f64),

    // steady flows
    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("alpha = {alpha} resonates with the principal eigenvalue {lambda1}")]
    ResonanceError { alpha: f64, lambda1: f64 },

    // energy-Casimir
    #[error("could not bracket the multiplier root")]
    RootBracketFailure,
    #[error("sample {index} is not in the rearrangement class (distance {distance:e})")]
    ClassViolation { index: usize, distance: f64 },

    // rearrangement
    #[error("stream function of the perturbation is nonzero on the boundary collar")]
    SupportViolation,
    #[error("transport along the perturbation never reaches distance {target:e}")]
    UnreachableDistance { target: f64 },

    // simulator
    #[error("time step violates the advective limit: max|v| dt = {courant:e} > {limit:e}")]
    CflViolation { courant: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // harness
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Name of the module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::MonotonicityViolation(_)
            | Error::CoercivityViolation(_)
            | Error::QuadratureFailure { .. }
            | Error::RegularityViolation(_) => "monotone_calculus",
            Error::InvalidSpec(_) | Error::SolverFailure(_) | Error::GridMismatch => "grid_domain",
            Error::ConvergenceFailure { .. } | Error::MassViolation(_) => "spectral",
            Error::NoConvergence { .. } | Error::ResonanceError { .. } => "steady_flows",
            Error::RootBracketFailure | Error::ClassViolation { .. } => "energy_casimir",
            Error::SupportViolation | Error::UnreachableDistance { .. } => "rearrangement",
            Error::CflViolation { .. } => "simulator",
            Error::InvalidArgument(_) => "core",
            Error::Config(_) | Error::Io(_) | Error::Json(_) => "cli_harness",
        }
    }

    /// True for configuration problems (as opposed to numerical failures).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidSpec(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
