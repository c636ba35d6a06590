//! Invariant-measure existence checks for Markov chains on finite state spaces.
//!
//! The crate builds auxiliary measures, evaluates almost-invariance indices,
//! checks drift, smallness and Harnack certificates, computes invariant
//! densities constructively and measures convergence rates.

pub mod certificates;
pub mod convergence;
pub mod error;
pub mod harnack;
pub mod io;
pub mod kernel;
pub mod matrix;
pub mod pipeline;
pub mod scenario;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{Kernel, KernelKind, Measure, RowSumPolicy, StateFn, StateSet, StateSpace};
pub use matrix::Matrix;
pub use semigroup::{Generator, Resolvent, Semigroup};
