//! DDPG and TD3 agents over any replay strategy.
//!
//! Both agents share the same action interface: the actor emits tanh outputs
//! that are scaled by the environment's per-dimension action bound, and
//! exploration adds i.i.d. Gaussian noise clipped back to the bound. Updates
//! take an already-selected batch, so the replay strategy (uniform, PER,
//! KLPER) is entirely the caller's business; PER passes importance weights,
//! the others pass `None`.

pub mod ddpg;
pub mod td3;

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::numcore::{Matrix, Mlp};
use crate::replay::CandidateBatch;
use crate::rng::SeedRng;

pub use ddpg::{DdpgAgent, DdpgParams};
pub use td3::{Td3Agent, Td3Params};

/// What one gradient update reports back to the training loop.
#[derive(Debug, Clone)]
pub struct UpdateDiagnostics {
    /// Mean (importance-weighted) squared TD error; TD3 averages both critics.
    pub critic_loss: f64,
    /// Negated mean Q under the current policy; `None` on delayed steps.
    pub actor_loss: Option<f64>,
    /// |y - Q(s, a)| per batch element, for PER priority refresh.
    pub td_errors: Vec<f64>,
}

/// Common interface the experiment harness drives.
pub trait Agent {
    fn algo_name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bound(&self) -> &[f64];
    /// Current actor network (tanh head, outputs in [-1, 1]).
    fn actor(&self) -> &Mlp;
    /// Deterministic policy action, plus clipped Gaussian noise when
    /// `explore` is set.
    fn act(&self, state: &[f64], explore: bool, rng: &mut SeedRng) -> Result<Vec<f64>>;
    /// One gradient update on `batch`. `weights` are PER importance weights
    /// (one per element); `update_index` drives delayed policy updates; `rng`
    /// feeds target-policy smoothing noise where the algorithm uses it.
    fn update(
        &mut self,
        batch: &CandidateBatch,
        weights: Option<&[f64]>,
        update_index: u64,
        rng: &mut SeedRng,
    ) -> Result<UpdateDiagnostics>;
    /// Write all constituent networks plus a manifest into `dir`.
    fn save_checkpoint(&self, dir: &Path, env_name: &str, step: u64) -> Result<()>;
}

/// Checkpoint manifest fields common to both algorithms.
#[derive(Debug, Clone)]
pub struct CheckpointMeta {
    pub algo: String,
    pub env: String,
    pub step: u64,
}

/// Load an agent checkpoint, dispatching on the manifest's `algo` key.
pub fn load_checkpoint(dir: &Path) -> Result<(Box<dyn Agent>, CheckpointMeta)> {
    let manifest = KvDoc::load(&dir.join("manifest.txt"))?;
    let algo = manifest.require("algo")?.to_string();
    let meta = CheckpointMeta {
        algo: algo.clone(),
        env: manifest.require("env")?.to_string(),
        step: manifest.require_parsed("step")?,
    };
    let agent: Box<dyn Agent> = match algo.as_str() {
        "ddpg" => Box::new(DdpgAgent::load_checkpoint_parts(dir, &manifest)?),
        "td3" => Box::new(Td3Agent::load_checkpoint_parts(dir, &manifest)?),
        other => return Err(Error::Parse(format!("unknown algo '{other}' in manifest"))),
    };
    Ok((agent, meta))
}

/// Clipped double-Q bootstrap target:
/// `y = r + gamma * min(q1, q2) * (1 - done)`.
pub fn clipped_double_q_target(r: f64, gamma: f64, q1: f64, q2: f64, done: bool) -> f64 {
    if done {
        r
    } else {
        r + gamma * q1.min(q2)
    }
}

pub(crate) fn check_gamma_tau(gamma: f64, tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must be in [0, 1), got {gamma}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must be in (0, 1], got {tau}")));
    }
    Ok(())
}

/// Full layer-size vector for an actor or critic given the hidden sizes.
pub(crate) fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// Deterministic policy action with optional exploration noise, clipped to
/// the action bound.
pub(crate) fn act_impl(
    actor: &Mlp,
    bound: &[f64],
    state: &[f64],
    explore: bool,
    noise_std: f64,
    rng: &mut SeedRng,
) -> Result<Vec<f64>> {
    let input = Matrix::from_rows(std::slice::from_ref(&state.to_vec()))?;
    let out = actor.forward(&input)?;
    let mut action: Vec<f64> = out
        .row(0)
        .iter()
        .zip(bound)
        .map(|(&v, &b)| v * b)
        .collect();
    if explore {
        for (a, &b) in action.iter_mut().zip(bound) {
            let z: f64 = StandardNormal.sample(rng);
            *a = (*a + noise_std * z).clamp(-b, b);
        }
    }
    Ok(action)
}

/// Mean-squared TD loss with optional importance weights. Returns the loss,
/// the per-element upstream gradient dL/dQ, and |delta| per element.
pub(crate) fn weighted_td_loss(
    q: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<(f64, Matrix, Vec<f64>)> {
    let b = y.len();
    if q.rows() != b || q.cols() != 1 {
        return Err(Error::Shape(format!(
            "critic output {}x{}, expected {b}x1",
            q.rows(),
            q.cols()
        )));
    }
    if let Some(w) = weights {
        if w.len() != b {
            return Err(Error::Shape(format!(
                "{} weights for a batch of {b}",
                w.len()
            )));
        }
    }
    let mut upstream = Matrix::zeros(b, 1);
    let mut td_errors = Vec::with_capacity(b);
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        let w = weights.map_or(1.0, |w| w[i]);
        let delta = y[i] - q[(i, 0)];
        loss += w * delta * delta * inv_b;
        upstream[(i, 0)] = -2.0 * w * delta * inv_b;
        td_errors.push(delta.abs());
    }
    Ok((loss, upstream, td_errors))
}

/// Shared divergence guard: every reported loss and every parameter must be
/// finite after an update.
pub(crate) fn check_finite(losses: &[f64], nets: &[&Mlp], context: &str) -> Result<()> {
    if losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("non-finite loss in {context}")));
    }
    if nets.iter().any(|n| !n.params_finite()) {
        return Err(Error::Divergence(format!(
            "non-finite network parameters after {context}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};
    use rand::Rng;

    #[test]
    fn clipped_double_q_terminal_masks_bootstrap() {
        assert_eq!(clipped_double_q_target(1.0, 0.99, 5.0, 7.0, true), 1.0);
    }

    #[test]
    fn clipped_double_q_equal_critics_reduce_to_single() {
        let y = clipped_double_q_target(0.5, 0.9, 2.0, 2.0, false);
        assert_eq!(y, 0.5 + 0.9 * 2.0);
    }

    #[test]
    fn clipped_double_q_never_exceeds_either_single_target() {
        let mut rng = derive(2, Stream::Replay);
        for _ in 0..1000 {
            let r = rng.random_range(-5.0..5.0);
            let gamma = rng.random_range(0.0..1.0);
            let q1 = rng.random_range(-10.0..10.0);
            let q2 = rng.random_range(-10.0..10.0);
            let done = rng.random_range(0..2) == 1;
            let y = clipped_double_q_target(r, gamma, q1, q2, done);
            let mask = if done { 0.0 } else { 1.0 };
            assert!(y <= r + gamma * q1 * mask);
            assert!(y <= r + gamma * q2 * mask);
        }
    }

    #[test]
    fn weighted_td_loss_matches_hand_computation() {
        let q = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let y = [2.0, 2.0];
        let (loss, upstream, td) = weighted_td_loss(&q, &y, Some(&[1.0, 0.5])).unwrap();
        // (1*1^2 + 0.5*0^2) / 2
        assert!((loss - 0.5).abs() < 1e-15);
        assert!((upstream[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(upstream[(1, 0)], 0.0);
        assert_eq!(td, vec![1.0, 0.0]);
    }
}
