//! Finite-volume simulation and analysis of a reaction-diffusion SIS epidemic
//! model with nonlinear incidence `beta * S^q * I^p` and optional
//! infection-repelled cross-diffusion.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod equilibria;
pub mod expr;
pub mod grid;
pub mod integrator;
pub mod linsolve;
pub mod model;
pub mod regime;
pub mod scenario;
pub mod stencil;

pub use grid::{Field, Grid, GridError};
pub use integrator::{run, step, RunConfig, RunOutcome, Scheme, State, StepperConfig};
pub use model::{ConservedTotals, ModelError, ModelParams, SisSystem};
