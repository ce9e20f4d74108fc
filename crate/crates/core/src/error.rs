use thiserror::Error;

/// Errors produced by the solvers, the simulator and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(
        "bracket [{lo}, {hi}] does not enclose a sign change (f(lo) = {f_lo}, f(hi) = {f_hi})"
    )]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("root finder did not converge within {iters} iterations (last bracket [{lo}, {hi}])")]
    MaxItersExceeded { iters: usize, lo: f64, hi: f64 },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("adaptive quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("integrand evaluated to a non-finite value at z = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("moment generating function diverges at theta = {theta}")]
    DivergentMoment { theta: f64 },

    #[error("delay exponent {target} is not reachable; the law saturates at {limit}")]
    Unreachable { target: f64, limit: f64 },

    #[error("infeasible delay constraint: {0}")]
    Infeasible(String),

    #[error("relay queue is unstable: E[C1] = {mean1} is not below E[C2] = {mean2}")]
    Unstable { mean1: f64, mean2: f64 },

    #[error("{stage}: {source}")]
    SolverFailure {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("no boundary point is reachable for both links")]
    EmptyBoundary,

    #[error("only {got} probe bits observed after warmup; at least {needed} are required")]
    InsufficientSamples { got: usize, needed: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Wraps `self` with the name of the solver stage that produced it.
    pub fn at(self, stage: &'static str) -> Error {
        Error::SolverFailure {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
