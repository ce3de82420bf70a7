//! Reference elements, quadrature, DoF numbering, constraints and transfer.

pub mod constraints;
pub mod dofs;
pub mod element;
pub mod interpolate;
pub mod quadrature;

pub use constraints::{
    build_constraints, Condensation, ConstraintSet, DirichletRule, HangingNodes,
};
pub use dofs::{Component, DofMap, CELL_DOFS, CELL_U};
pub use element::{ReferenceElement, Tabulation};
pub use interpolate::{interpolate_field, interpolation_error, FieldKind};
pub use quadrature::{gauss_line, gauss_square, QuadratureRule};
