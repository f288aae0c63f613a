//! Principal-component highly adaptive estimators.
//!
//! The zero-order indicator spline basis with knots at the training points is
//! never materialized. Everything flows through the exact integer kernel
//! `K = H Hᵀ`, its eigendecomposition `K = U D² Uᵀ`, and the PC design
//! `Z = U D`. On top of that sit three fitters (ridge, lasso, and a generalized
//! lasso that controls `‖β‖₁` of the implied basis coefficients), V-fold
//! selection, and the average-treatment-effect machinery.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod causal;
pub mod cv;
pub mod dense;
pub mod error;
pub mod experiments;
pub mod io;
pub mod loss;
pub mod pc;
pub mod rng;
pub mod solver;

pub use basis::{scale_to_unit_cube, BasisSpec, CovariateMatrix, KernelMatrix, ScalingMap};
pub use error::{PchaError, Result};
pub use loss::{LossKind, RiskState};
pub use pc::{PCWorkingModel, WorkingModelConfig};
pub use solver::{FittedEstimator, HaglMethod, Mode, SolverConfig};
