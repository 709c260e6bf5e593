//! Numerics for the regional fractional Laplacian quadratic form on radial
//! geometries: graded radial meshes, singular double-integral quadrature of
//! the Gagliardo kernel, the killing measure of the unit ball, critical
//! Sobolev quotient minimization, and the fractional Green-function mass.

pub mod appendix;
pub mod assembly;
pub mod constants;
pub mod error;
pub mod forms;
pub mod green_mass;
pub mod grid;
pub mod kernel;
pub mod minimize;
pub mod quad;
pub mod special;
pub mod testfunctions;

pub use constants::{Params, RieszConvention};
pub use error::{Error, Result};
pub use forms::{lp_norm, rayleigh_quotient, FormMatrices, Potential};
pub use green_mass::{mass_crossing, solve_mass, MassResult, MassSolver};
pub use grid::{QuadSpec, RadialFunction, RadialGrid};
pub use minimize::{minimize_quotient, sweep_s, MinimizeOptions, MinimizeResult};
pub use testfunctions::{boundary_cutoff, sharp_constant_estimate, Bubble};
