//! Spectral machinery for variable-order differential equations with regular
//! singularities on star graphs.
//!
//! The crate builds fundamental systems of solutions on each edge
//! ([`singular_ode`], [`birkhoff`]), assembles Weyl-type matrices on the graph
//! ([`graph_forward`]) and runs the reduction that reconstructs the internal
//! Weyl matrix of one edge from boundary data on the others ([`inverse`]).

pub mod birkhoff;
pub mod cli;
pub mod error;
pub mod graph_forward;
pub mod inverse;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod report;
pub mod selftest;
pub mod singular_ode;

pub use error::{Error, Result};
