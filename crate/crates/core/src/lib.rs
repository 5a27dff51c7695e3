//! Variational and data-driven solvers for imaging inverse problems.

pub mod convex;
pub mod deq;
pub mod error;
pub mod fidelity;
pub mod grid;
pub mod linalg;
pub mod metrics;
pub mod operators;
pub mod pnp;
pub mod regularizers;
pub mod segmentation;
pub mod solvers;

pub use error::{Error, Result};
