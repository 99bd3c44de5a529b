//! Numerical machinery for quadratic backward stochastic PDEs on boxes:
//! backward solves, exponential changes of variables, a monotone
//! approximation scheme, estimate verifiers and a recursive control example.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::type_complexity, clippy::needless_range_loop)]

pub mod approximation;
pub mod cli;
pub mod control;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod presets;
pub mod rng;
pub mod solver;
pub mod spec;
pub mod transforms;

pub use error::{Error, Result};
