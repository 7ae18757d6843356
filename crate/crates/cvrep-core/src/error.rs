use thiserror::Error;

use crate::fock::ModeId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode {0} appears in both operands")]
    ModeCollision(ModeId),
    #[error("mode {0} is not present in the state")]
    UnknownMode(ModeId),
    #[error("{name} = {value} outside {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("state has trace {0}, expected a normalized state")]
    NotNormalized(f64),
    #[error("unphysical covariance matrix: {0}")]
    Unphysical(&'static str),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("numeric mode only supports two links, got {links}")]
    Intractable { links: usize },
    #[error("quadrature did not converge, residual {residual:e}")]
    Quadrature { residual: f64 },
    #[error("limit extrapolation did not settle, last change {residual:e}")]
    Extrapolation { residual: f64 },
    #[error("optimizer did not converge after {evaluations} evaluations")]
    Optimizer { evaluations: usize },
}

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            expected,
        })
    }
}
