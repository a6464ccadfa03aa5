//! Numerical laboratory for the damped semilinear Klein-Gordon equation
//! driven by the sub-Laplacian of the Heisenberg group.
//!
//! The crate is organized around one discretization decision: the discrete
//! horizontal fields are one-sided differences composed so that summation by
//! parts is exact, which makes the semi-discrete energy identity an identity
//! rather than an approximation. On top of that sit the diagnostics (energy,
//! Nehari functional, the auxiliary functionals of the concavity argument),
//! a certificate evaluating the closed-form blow-up bounds, and independent
//! oracles (exact group algebra via jets, an adaptive scalar integrator,
//! discrete eigenmodes, manufactured solutions) that everything is tested
//! against.

pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod hgroup;
pub mod oracle;
pub mod subop;

pub use dynamics::{
    acceleration, cfl_max_dt, estimate_blowup_time, run, step, Forcing, NonlinearSpec, PhysParams,
    RunSetup, RunStatus, State, StatusTag,
};
pub use error::{Error, Result};
pub use functionals::{
    aux_a, aux_m, certificate, dissipation_residual, energy, nehari, prepare_blowup_data,
    trace_monitors, BlowupData, BumpSpec, CertificateInputs, CertificateReport, DiagnosticsRow,
    MonitorSeries, Trace,
};
pub use grid::{
    inner, l2_norm_sq, linf_norm, read_snapshot, write_snapshot, BoundaryCondition, BoxGrid, Field,
};
pub use hgroup::{
    apply_sublaplacian_exact, apply_x, apply_y, commutator_defect, dilate, inverse, mul,
    GroupPoint, Jet2, SeparableTest, TestFunction,
};
pub use oracle::{
    eigenmode, manufactured_case, scalar_solve, scalar_solve_at, ManufacturedCase, ScalarSample,
    ScalarStatus, ScalarTrace,
};
pub use subop::{grad_h, spectral_bound, sublaplacian, x_forward, y_forward, SpectralBound};
