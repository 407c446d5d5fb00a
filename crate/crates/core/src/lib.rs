//! Population-migration ("opinion") dynamics on influence graphs.
//!
//! Types are vertices of an undirected graph and hold fractions of a fixed
//! population. Along every edge, mass moves from the smaller endpoint to the
//! larger one. The crate provides the deterministic map and its convergence
//! and stability analysis, a stochastic extension where types are born and
//! die, and Monte Carlo drivers that check the long-run behavior.

pub mod dynamics;
pub mod evolution;
pub mod error;
pub mod graph;
pub mod harness;
pub mod influence;
pub mod rng;
pub mod stability;

pub use error::{Error, Result};
pub use graph::{InfluenceGraph, RewiringPolicy, TypeId};
pub use influence::{InfluenceAssignment, InfluenceFunction};
