//! One error type covering every fallible operation of the crate.

use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::geometry::GeometryError;
use crate::integrator::IntegratorError;
use crate::limits::LimitError;
use crate::linalg::SolverError;
use crate::params::ParamError;
use crate::pressures::PressureError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Pressure(#[from] PressureError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Limits(#[from] LimitError),
}
