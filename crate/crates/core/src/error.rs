use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },
    #[error("ODE step rejected: local error estimate {estimate:e} exceeds tolerance {tol:e}")]
    StepRejected { estimate: f64, tol: f64 },
    #[error("empty level strip at a={a} eps={eps}")]
    EmptyLevel { a: f64, eps: f64 },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("inversion failure: CDF not monotone, max violation {max_violation:e}")]
    Inversion { max_violation: f64 },
    #[error("bias bound {bound:e} above tolerance {tol:e}")]
    BiasBound { bound: f64, tol: f64 },
    #[error("config error: key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        op,
        reason: reason.into(),
    }
}

pub(crate) fn check_gamma(op: &'static str, gamma: f64) -> Result<()> {
    if gamma > 1.0 && gamma <= 2.0 {
        Ok(())
    } else {
        Err(domain(op, format!("gamma={gamma} outside (1,2]")))
    }
}
