use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("integration became stiff: step size underflow at t = {time} ns (smallest step {step:e} ns)")]
    Stiffness { time: f64, step: f64 },
    #[error("trace drift {0:e} exceeds renormalization guard")]
    TraceDrift(f64),
    #[error("steady state is not unique (null space dimension {0})")]
    NonUniqueSteadyState(usize),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("insufficient span: {0}")]
    InsufficientSpan(String),
    #[error("no signal: {0}")]
    NoSignal(String),
}

impl Error {
    /// True for failures of a numerical method rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stiffness { .. } | Error::TraceDrift(_) | Error::NonUniqueSteadyState(_) | Error::NoSignal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite, got {value}") })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be > 0, got {value}") })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be >= 0, got {value}") })
    }
}
