//! Low-rank multipatch isogeometric solver for linear elasticity.
//!
//! The discrete system lives on overlapping subdomains made of one, two,
//! four or eight glued patches. Every block of the system matrix, the right
//! hand side and the iterates are stored in Tucker format, and the system is
//! solved with a truncated preconditioned conjugate gradient method.

pub mod error;
pub mod linalg;
pub mod splines;
pub mod tucker;
pub mod funclowrank;
pub mod geometry;
pub mod assembly;
pub mod precond;
pub mod solver;
pub mod verify;
pub mod bench;

pub use error::{Error, Result};
