//! Zero range process among random conductances on the supercritical
//! percolation cluster: environments, exact kinetic Monte Carlo, cluster
//! homogenization, the limiting nonlinear heat equation and end-to-end
//! hydrodynamic experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environment;
pub mod error;
pub mod harness;
pub mod homogenization;
pub mod io;
pub mod lattice;
pub mod macroscopic;
pub mod pde;
pub mod rng;
pub mod zrp;

pub use error::{Error, Result};
