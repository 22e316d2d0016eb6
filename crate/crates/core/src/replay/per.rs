//! Proportional prioritized replay.
//!
//! Leaves of the sum tree hold `(|td_error| + PRIORITY_FLOOR)^alpha`; a
//! transition's sampling probability is its leaf mass over the total.
//! Sampling is stratified: the total mass is split into `b` equal segments
//! and one point is drawn uniformly inside each. Importance weights
//! `(size * P(i))^(-beta)` are normalized by the batch maximum.

use rand::Rng;

use crate::error::{Error, Result};
use crate::replay::sum_tree::SumTree;
use crate::replay::{CandidateBatch, ReplayBuffer};
use crate::rng::SeedRng;

/// Added to every |td_error| so no sampled transition ever reaches zero mass.
pub const PRIORITY_FLOOR: f64 = 1e-6;

/// Leaf mass given to the very first transition, before any update exists.
const INITIAL_PRIORITY: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct PerState {
    tree: SumTree,
    alpha: f64,
    beta: f64,
}

impl PerState {
    pub fn new(capacity: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
        }
        Ok(Self {
            tree: SumTree::new(capacity),
            alpha,
            beta,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Register the slot a fresh transition was written to. New entries get
    /// the largest current leaf mass so they are sampled soon.
    pub fn on_push(&mut self, slot: usize) {
        let max = self.tree.max_leaf();
        let mass = if max > 0.0 { max } else { INITIAL_PRIORITY };
        self.tree.set(slot, mass);
    }

    /// Stratified proportional sample with importance weights.
    pub fn sample(
        &self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        rng: &mut SeedRng,
    ) -> Result<(CandidateBatch, Vec<f64>)> {
        if buffer.len() < batch_size {
            return Err(Error::Underfull {
                need: batch_size,
                have: buffer.len(),
            });
        }
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::EmptyPriority);
        }

        let n = buffer.len() as f64;
        let segment = total / batch_size as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut raw_weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let u: f64 = rng.random();
            let mass = (k as f64 + u) * segment;
            let idx = self.tree.find_prefix(mass).min(buffer.len() - 1);
            let prob = self.tree.leaf(idx) / total;
            indices.push(idx);
            raw_weights.push((n * prob).powf(-self.beta));
        }
        let w_max = raw_weights.iter().cloned().fold(f64::MIN, f64::max);
        let weights = raw_weights.iter().map(|w| w / w_max).collect();
        Ok((buffer.gather(&indices), weights))
    }

    /// Write back fresh |td_error| values for just-sampled transitions.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Shape(format!(
                "{} indices vs {} td errors",
                indices.len(),
                td_errors.len()
            )));
        }
        for (&idx, &delta) in indices.iter().zip(td_errors) {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::Domain(format!(
                    "priorities need |td_error| >= 0, got {delta}"
                )));
            }
            self.tree.set(idx, (delta + PRIORITY_FLOOR).powf(self.alpha));
        }
        Ok(())
    }
}
