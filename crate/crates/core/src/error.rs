use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("argument outside the domain of {0}")]
    Domain(&'static str),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("grids do not match")]
    GridMismatch,
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("non-finite or negative state at step {step} (index {index})")]
    BlowUp { step: usize, index: usize },
    #[error("mass drift {drift:e} at step {step}")]
    MassDrift { step: usize, drift: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("theorem hypothesis violated: {0}")]
    Hypothesis(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. } | Error::MassDrift { .. } | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
