//! Finite-approximate steering of linear and semilinear parabolic equations.
//!
//! Controls are synthesized so that the terminal state lands within a
//! prescribed distance of a target while its orthogonal projection onto a
//! chosen finite-dimensional subspace matches the target exactly.

pub mod cli;
pub mod error;
pub mod evolution;
pub mod expm;
pub mod linops;
pub mod semilinear;
pub mod spectral;
pub mod steering;

pub use error::{Error, Result};
