//! Subevent detection with event-based text segmentation as an auxiliary task.
//!
//! The crate covers the whole pipeline:
//!
//! - [`corpus`]: documents, events, pair labels, JSONL ingestion, transitive
//!   closure of membership/coreference annotations and within/across statistics.
//! - [`eventseg`]: gold segmentation derived from membership trees.
//! - [`features`]: the 42-dimensional three-event subgraph feature space and
//!   mining of constraint-learning examples.
//! - [`constraints`]: the two-layer rectifier network whose hidden units are
//!   linear inequality constraints.
//! - [`joint`]: the pairwise relation/segmentation classifier trained with a
//!   constraint-derived regularizer.
//! - [`infer`]: test-time prediction and evaluation metrics.
//! - [`synth`]: synthetic corpora with planted event complexes.
//! - [`pipeline`]: reproducible end-to-end runs with a hashed manifest.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! pin the common instantiations.

pub mod constraints;
pub mod corpus;
pub mod error;
pub mod eventseg;
pub mod features;
pub mod infer;
pub mod joint;
pub mod optim;
pub mod pipeline;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Rectifier constraint network in double precision.
pub type RectifierNet64 = constraints::RectifierNet<f64>;
/// Rectifier constraint network in single precision.
pub type RectifierNet32 = constraints::RectifierNet<f32>;
/// Joint classifier in double precision (used for gradient checks).
pub type JointModel64 = joint::JointModel<f64>;
/// Joint classifier in single precision (default for training).
pub type JointModel32 = joint::JointModel<f32>;
/// Optimizer state in double precision.
pub type Adam64 = optim::Adam<f64>;
/// Optimizer state in single precision.
pub type Adam32 = optim::Adam<f32>;
