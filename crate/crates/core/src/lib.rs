//! Level-set topology optimization of compliant mechanisms with a p-norm
//! von Mises stress constraint.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix it to double precision, which is what the
//! optimizer and command line use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod levelset;
pub mod linalg;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod scalar;
pub mod sensitivity;
pub mod stress;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh64 = mesh::Mesh<f64>;
pub type LevelSet64 = levelset::LevelSetField<f64>;
pub type FemModel64 = fem::FemModel<f64>;
pub type Optimizer64 = optimizer::Optimizer<f64>;
pub type OptimizerState64 = optimizer::OptimizerState<f64>;
pub type RunResult64 = optimizer::RunResult<f64>;
pub type StressField64 = stress::StressField<f64>;
