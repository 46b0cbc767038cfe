use thiserror::Error;

use crate::niw::Coord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown coordinate {0}")]
    UnknownCoordinate(Coord),

    #[error("conditioning on every coordinate leaves an empty belief")]
    EmptyBelief,

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("improper marginal: degrees of freedom {dof} must be positive")]
    ImproperMarginal { dof: f64 },

    #[error("covariance not positive definite for rho = {rho}")]
    Generation { rho: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unbalanced design: {0}")]
    Unbalanced(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
