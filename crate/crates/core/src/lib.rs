//! Stochastic-gradient estimation for linear statistical inverse problems
//! `Y = A[f](X) + noise`.
//!
//! The crate is `no_std` (it needs `alloc`). It provides:
//!
//! - [`grid`]: uniform grids, gridded functions, quadrature and interpolation.
//! - [`loss`]: squared and logistic point losses.
//! - [`operators`]: functional linear regression and Heaviside deconvolution
//!   operators with their adjoint kernels and single-sample gradients.
//! - [`learners`]: cubic B-spline and regression-tree base learners.
//! - [`solvers`]: one-pass averaged SGD, learner-smoothed SGD and Landweber.
//! - [`synthgen`]: seeded synthetic data generators.
//! - [`eval`]: metrics, Monte Carlo oracles and the excess-risk bound.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod eval;
pub mod grid;
pub mod learners;
pub mod loss;
pub mod operators;
pub mod rng;
pub mod solvers;
pub mod synthgen;

pub use error::{Error, Result};
pub use grid::{DiscreteFn, Grid};
pub use learners::{FittedLearner, LearnerSpec};
pub use loss::LossKind;
pub use operators::{Covariate, Problem, ProblemKind, Sample, SampleAccess};
pub use solvers::{SampleMode, SolverConfig, SolverOutput, StepSchedule};
