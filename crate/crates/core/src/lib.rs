//! Continuous-control deep reinforcement learning with DDPG and TD3 agents
//! and three experience-replay strategies: uniform sampling, proportional
//! prioritized replay (PER), and KL-divergence batch prioritization (KLPER).
//!
//! KLPER samples several candidate mini-batches per update, fits a Gaussian
//! "batch generating policy" to each batch's action deltas (stored action
//! minus what the current actor would do), scores each batch by its KL
//! divergence to an isotropic zero-mean target, and trains on the batch with
//! the lowest score — the one that looks most on-policy.
//!
//! The crate is organized as:
//! - [`numcore`]: dense f64 matrices, a small MLP with reverse-mode
//!   gradients, Adam, and parameter snapshots.
//! - [`gauss`]: batch-policy fitting and the Gaussian KL score, with a
//!   Monte-Carlo oracle for verification.
//! - [`replay`]: transition storage, the three sampling strategies, and the
//!   sum tree backing PER.
//! - [`agents`]: DDPG and TD3 update rules over any replay strategy.
//! - [`envs`]: two deterministic desk-scale tasks (`pendulum`, `reacher2d`).
//! - [`harness`]: seeded experiment engine, evaluation protocol, and CSV
//!   metrics output.
//!
//! Everything downstream of a `(RunConfig, seed)` pair is deterministic:
//! training twice with the same config writes byte-identical metrics files.

pub mod agents;
pub mod envs;
pub mod error;
pub mod gauss;
pub mod harness;
mod kv;
pub mod numcore;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
