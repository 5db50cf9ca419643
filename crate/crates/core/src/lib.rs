//! Staggered finite volume schemes for the barotropic Navier-Stokes equations
//! at low Mach number: implicit, pressure-correction and semi-implicit time
//! stepping on rectangular MAC-type grids with Rannacher-Turek diffusion,
//! their incompressible limits, and the discrete energy/entropy diagnostics.

pub mod cases;
pub mod diagnostics;
pub mod eos;
pub mod fields;
pub mod gauss;
pub mod mesh;
pub mod operators;
pub mod output;
pub mod schemes;
pub mod solvers;
pub mod vortex;
