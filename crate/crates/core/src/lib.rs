//! Majorization-minimization generalized Krylov subspace solvers for
//! edge-preserving ℓ2-ℓq regularized linear inverse problems, with a
//! memory-bounded recycled variant and a streaming variant.

pub mod compression;
pub mod error;
pub mod formats;
pub mod harness;
pub mod linalg;
pub mod mm;
pub mod operators;
pub mod problems;
pub mod regularizers;
pub mod solvers;

pub use error::{Error, Result};
