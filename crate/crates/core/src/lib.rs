//! Dynamic latent-process network model: simulation of filtered Poisson
//! random-dot-product event streams and detection of a change window with an
//! anomalous vertex subset.

// Negated float comparisons are how NaN is routed to the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod dirichlet;
pub mod em;
pub mod error;
pub mod generator;
pub mod initializer;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod selection;
pub mod simplex;
pub mod study;

pub use error::{Error, Result};
pub use model::{
    ChangeWindow, DirichletParams, EdgeEvent, EventLog, LatentPosition, Mode, PartitionModel, VertexSubset,
};
