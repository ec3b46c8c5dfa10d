//! Green's functions for first-order linear periodic problems with reflection
//! of the argument,
//!
//! ```text
//! x'(t) + a(t) x(-t) + b(t) x(t) = h(t),   x(-T) = x(T).
//! ```

pub mod error;
pub mod expr;
pub mod funcspace;
pub mod classify;
pub mod involution;
pub mod kernels;
pub mod problem;
pub mod oracle;
pub mod signs;
pub mod solver;
pub mod quad;

pub use error::{Error, Result};
