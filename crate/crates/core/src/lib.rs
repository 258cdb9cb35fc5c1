//! hp-adaptive finite elements for the stationary two-field Biot system with
//! Signorini contact on quadrilateral meshes.
//!
//! The quadrature, basis and sparse layers are generic over [`scalar::Real`];
//! the finite element pipeline works in `f64`, and the aliases below name the
//! `f64` instances used there.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptivity;
pub mod assembly;
pub mod element;
pub mod error;
pub mod estimator;
pub mod mesh;
pub mod problem;
pub mod quad_basis;
pub mod scalar;
pub mod space;
pub mod sparse;
pub mod study;
pub mod validate;
pub mod vi_solver;
pub mod vtk;

pub use error::{Error, Result};

pub type QuadratureRule1D = quad_basis::QuadratureRule<f64>;
pub type ShapeBasis = quad_basis::LagrangeBasis<f64>;
pub type SparseMatrix = sparse::CsrMatrix<f64>;
