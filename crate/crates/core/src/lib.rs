//! Multi-virus contact process with death.
//!
//! Every vertex of a graph carries an infection count. Infected vertices heal
//! one infection at a time and pass infections to their live neighbors; a
//! vertex that receives its `k`-th infection dies with probability `phi(k)`
//! and takes all its edges with it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod engine;
pub mod error;
pub mod graphs;
pub mod model;
pub mod parallel;
pub mod rates;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
pub use model::{DeathProfile, GraphState, MvcpConfig, Outcome, VertexId, VertexState};
