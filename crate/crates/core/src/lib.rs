//! Finite elements for a viscoelastic phase-field tumour growth model.
//!
//! The crate is organized bottom-up: [`tensor`] and [`lambda`] are pure
//! pointwise and per-element kernels, [`mesh`] and [`fespace`] provide the
//! discretization, [`solver`] drives the time stepping and [`diagnostics`]
//! measures what the solver produces. [`config`], [`presets`] and [`vtk`]
//! cover input and output.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod checks;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod fespace;
pub mod lambda;
pub mod linsolve;
pub mod mesh;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod tensor;
pub mod vtk;

pub use affine::AffineMap;
pub use error::{Error, Result};
pub use lambda::{build_lambda, chain_rule_residual, ElementLambda, Regularization};
pub use tensor::SymMat;
