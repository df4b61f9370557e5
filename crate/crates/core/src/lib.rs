//! Conforming finite-element solver for a linearized thermoelastic solid coupled
//! to a compressible viscous thermofluid, with the energy and limit diagnostics
//! used to verify it.

pub mod assembly;
pub mod battery;
pub mod diagnostics;
pub mod error;
pub mod forcing;
pub mod geometry;
pub mod integrator;
pub mod limits;
pub mod linalg;
pub mod params;
pub mod pressures;
pub mod quadrature;
pub mod sparse;

pub use assembly::{build_system, AssembledSystem, AssemblyOptions};
pub use diagnostics::{energy_audit, BoundCheck, EnergyReport, EstimateForm, NormKind};
pub use error::Error;
pub use forcing::{BodyForce, Envelope, ForcingSpec, HeatSource, InitialData, ScalarField, VectorField};
pub use geometry::{build_geometry, CellBox, Layout, MediumGeometry};
pub use integrator::{integrate, project_initial, State, Trajectory};
pub use limits::{run_sweep, solve_c2, Gauge, LimitReport, SweepMode, SweepPlan};
pub use params::{DimensionlessParams, PhysicalParams};
pub use pressures::PressureFields;
