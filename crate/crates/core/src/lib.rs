//! Associated transfer matrices and Green functions for matrix
//! Sturm–Liouville systems in layered media.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod green;
pub mod input;
pub mod linalg;
pub mod models;
pub mod observables;
pub mod ode;
pub mod par;
pub mod quadrature;
pub mod sl_system;
pub mod stack;
pub mod sweep;
pub mod transfer;

pub use error::{AtmError, Result};
