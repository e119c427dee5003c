//! Constraint learning with a two-layer rectifier network.
//!
//! The network scores a subgraph feature vector `x` as
//! `p = sigmoid(1 - sum_k relu(w_k . x + b_k))`. Hidden unit `k` is a linear
//! constraint that is satisfied while its pre-activation `w_k . x + b_k` is
//! non-positive; every violated constraint pushes `p` down.

mod file;
mod net;
mod train;

pub use file::{extract_constraints, ConstraintFile, ConstraintSet, Inequality};
pub use net::{CheckMode, RectifierGrad, RectifierNet};
pub use train::{accuracy, train, LearnConfig, TrainReport};
