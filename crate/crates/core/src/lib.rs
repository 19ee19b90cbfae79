//! Numerical toolkit for radially symmetric positive solutions of coupled
//! cubic Schrödinger systems in R^3: scalar ground states, bifurcation
//! curves from the semitrivial families, fixed-parameter Newton solves,
//! pseudo-arclength branch continuation, mass-ratio targeting, and the
//! rescaling that produces solutions with prescribed L^2 masses.

pub mod banded;
pub mod continuation;
pub mod coupled;
pub mod error;
pub mod grid;
pub mod groundstate;
pub mod interp;
pub mod ode;
pub mod operator;
pub mod region;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{
    grad_norm2, integrate, joint_l2_distance, l2_norm, l4_norm4, make_grid, weighted_inner,
    RadialField, RadialGrid,
};
pub use operator::{solve_banded, BandedOperator};
