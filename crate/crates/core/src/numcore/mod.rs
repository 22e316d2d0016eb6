//! Numerical substrate: matrices, the MLP, Adam, and parameter snapshots.

pub mod adam;
pub mod matrix;
pub mod mlp;
pub mod snapshot;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use mlp::{soft_update, Gradients, Mlp, OutputActivation};
