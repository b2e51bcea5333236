use thiserror::Error;

/// Failure modes of the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EscError {
    #[error("equilibrium solve did not converge at u = {u} ({iterations} iterations, residual {residual:e})")]
    NonConvergence {
        u: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("equilibrium Jacobian is singular at u = {u}")]
    SingularJacobian { u: f64 },

    #[error("complex linear solve is singular at s = {re} + {im}i")]
    SingularSolve { re: f64, im: f64 },

    #[error("sample window of {samples} steps is not an integer number of periods ({periods:.6})")]
    WindowMismatch { samples: usize, periods: f64 },

    #[error("linearized response vanishes at u = {u} (|G| = {magnitude:e})")]
    DegenerateResponse { u: f64, magnitude: f64 },

    #[error("tangent argument {argument} is singular in the deviation estimate")]
    TangentSingularity { argument: f64 },

    #[error("no candidate transmission zero passed the residual check")]
    IllConditionedPencil,

    #[error("continuation corrector diverged near (u, omega) = ({u}, {omega})")]
    CorrectorDivergence { u: f64, omega: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("shooting Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("period-map Jacobian I - M is rank deficient")]
    RankDeficientJacobian,

    #[error("stability sign is inconclusive (k dL/du = {value:e})")]
    InconclusiveSign { value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, EscError>;
