//! Quasi-static brittle fracture in nearly incompressible solids.
//!
//! The displacement `u`, a hydrostatic pressure `p` and the phase-field `phi`
//! are discretized with Taylor-Hood Q2/Q1 elements (phase-field on Q1) over a
//! quadtree mesh with hanging nodes. Crack irreversibility `phi^n <= phi^{n-1}`
//! is enforced with a nodal Lagrange multiplier inside a semi-smooth Newton
//! method, and meshes are adapted per loading step from residual error
//! indicators of the phase-field inequality.

pub mod adapt;
mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod physics;
pub mod solver;

pub use error::{Error, Result};
