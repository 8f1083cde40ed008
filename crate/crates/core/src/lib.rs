//! Social rating prediction with a heterogeneous-graph GNN that samples
//! neighbors by their consistency with a per-(user, item) query and weighs
//! the sampled neighbors with relation-aware attention.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dataio`]: edge-file parsing, social-link filtering, dense indexing,
//!   seeded train/validation/test splits and the canonical dataset directory.
//! - [`hetgraph`]: the multi-relation adjacency (one relation per rating
//!   level, plus social and item-item relations).
//! - [`model`]: parameters, forward pass with trace recording, hand-derived
//!   backward pass, checkpoints.
//! - [`trainer`]: loss, Adam with decoupled weight decay, early stopping,
//!   RMSE/MAE evaluation.
//! - [`harness`]: grid search, ablations and sensitivity sweeps.
//! - [`gradcheck`]: central finite-difference verification of the backward pass.
//! - [`synthetic`]: small generated datasets used by tests and benchmarks.

pub mod dataio;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod hetgraph;
pub mod model;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
