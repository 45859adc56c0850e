//! Experiment runner for `sipsolve-core`: JSON configuration, replicated
//! synthetic studies, oracle checks and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use error::AppError;
