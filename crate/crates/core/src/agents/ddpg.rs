//! Deep deterministic policy gradient.
//!
//! Update order per batch: the critic regresses on the bootstrap target
//! `y = r + gamma * (1 - done) * Q'(s', actor'(s'))`, then the actor ascends
//! `Q(s, actor(s))` by chaining the critic's input gradient through the
//! actor, then both target networks blend toward their online copies.

use std::path::Path;

use crate::agents::{
    act_impl, check_finite, check_gamma_tau, layer_sizes, weighted_td_loss, Agent,
    UpdateDiagnostics,
};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::numcore::{self, soft_update, AdamState, Matrix, Mlp, OutputActivation};
use crate::replay::{scale_columns, CandidateBatch};
use crate::rng::SeedRng;

#[derive(Debug, Clone)]
pub struct DdpgParams {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub exploration_noise_std: f64,
}

impl Default for DdpgParams {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            tau: 0.005,
            gamma: 0.99,
            exploration_noise_std: 0.1,
        }
    }
}

pub struct DdpgAgent {
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    params: DdpgParams,
    action_bound: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
}

impl DdpgAgent {
    /// Networks draw their initial weights from `rng` in a fixed order
    /// (actor, then critic); targets start as exact copies.
    pub fn new(spec: &EnvSpec, params: DdpgParams, rng: &mut SeedRng) -> Result<Self> {
        check_gamma_tau(params.gamma, params.tau)?;
        if params.exploration_noise_std < 0.0 {
            return Err(Error::Config("exploration noise std must be >= 0".into()));
        }
        let (m, l) = (spec.state_dim, spec.action_dim);
        let actor = Mlp::new(&layer_sizes(m, &params.hidden, l), OutputActivation::Tanh, rng)?;
        let critic = Mlp::new(
            &layer_sizes(m + l, &params.hidden, 1),
            OutputActivation::Identity,
            rng,
        )?;
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = AdamState::new(&actor, params.actor_lr)?;
        let critic_opt = AdamState::new(&critic, params.critic_lr)?;
        Ok(Self {
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            params,
            action_bound: spec.action_bound.clone(),
            state_dim: m,
            action_dim: l,
        })
    }

    pub fn params(&self) -> &DdpgParams {
        &self.params
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    #[cfg(test)]
    pub(crate) fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    /// Bootstrap targets `y_i` for a batch, using the target networks.
    pub fn critic_targets(&self, batch: &CandidateBatch) -> Result<Vec<f64>> {
        let next_states = batch.next_states_matrix();
        let mut next_actions = self.actor_target.forward(&next_states)?;
        scale_columns(&mut next_actions, &self.action_bound);
        let q_next = self
            .critic_target
            .forward(&next_states.hcat(&next_actions)?)?;
        let rewards = batch.rewards();
        let dones = batch.dones();
        Ok((0..batch.len())
            .map(|i| {
                let bootstrap = if dones[i] { 0.0 } else { q_next[(i, 0)] };
                rewards[i] + self.params.gamma * bootstrap
            })
            .collect())
    }

    /// Q(s, a) under the online critic for each batch element.
    pub fn critic_values(&self, batch: &CandidateBatch) -> Result<Vec<f64>> {
        let input = batch.states_matrix().hcat(&batch.actions_matrix())?;
        let q = self.critic.forward(&input)?;
        Ok((0..q.rows()).map(|i| q[(i, 0)]).collect())
    }

    /// Replace all four networks; architectures must match.
    pub fn replace_networks(
        &mut self,
        actor: Mlp,
        critic: Mlp,
        actor_target: Mlp,
        critic_target: Mlp,
    ) -> Result<()> {
        if !actor.same_architecture(&self.actor)
            || !critic.same_architecture(&self.critic)
            || !actor_target.same_architecture(&self.actor_target)
            || !critic_target.same_architecture(&self.critic_target)
        {
            return Err(Error::Shape("checkpoint architecture mismatch".into()));
        }
        self.actor = actor;
        self.critic = critic;
        self.actor_target = actor_target;
        self.critic_target = critic_target;
        Ok(())
    }

    pub(crate) fn load_checkpoint_parts(dir: &Path, manifest: &KvDoc) -> Result<Self> {
        let spec = EnvSpec {
            state_dim: manifest.require_parsed("state_dim")?,
            action_dim: manifest.require_parsed("action_dim")?,
            action_bound: parse_f64_list(manifest.require("action_bound")?)?,
            max_episode_steps: 0,
        };
        let params = DdpgParams {
            hidden: parse_usize_list(manifest.require("hidden")?)?,
            actor_lr: manifest.require_parsed("actor_lr")?,
            critic_lr: manifest.require_parsed("critic_lr")?,
            tau: manifest.require_parsed("tau")?,
            gamma: manifest.require_parsed("gamma")?,
            exploration_noise_std: manifest.require_parsed("exploration_noise_std")?,
        };
        let mut init = crate::rng::derive(0, crate::rng::Stream::Init);
        let mut agent = DdpgAgent::new(&spec, params, &mut init)?;
        agent.replace_networks(
            numcore::snapshot::load(&dir.join("actor.mlp"))?,
            numcore::snapshot::load(&dir.join("critic.mlp"))?,
            numcore::snapshot::load(&dir.join("actor_target.mlp"))?,
            numcore::snapshot::load(&dir.join("critic_target.mlp"))?,
        )?;
        Ok(agent)
    }
}

impl Agent for DdpgAgent {
    fn algo_name(&self) -> &'static str {
        "ddpg"
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn action_bound(&self) -> &[f64] {
        &self.action_bound
    }

    fn actor(&self) -> &Mlp {
        &self.actor
    }

    fn act(&self, state: &[f64], explore: bool, rng: &mut SeedRng) -> Result<Vec<f64>> {
        act_impl(
            &self.actor,
            &self.action_bound,
            state,
            explore,
            self.params.exploration_noise_std,
            rng,
        )
    }

    fn update(
        &mut self,
        batch: &CandidateBatch,
        weights: Option<&[f64]>,
        _update_index: u64,
        _rng: &mut SeedRng,
    ) -> Result<UpdateDiagnostics> {
        if batch.is_empty() {
            return Err(Error::InsufficientSamples("empty update batch".into()));
        }
        let states = batch.states_matrix();
        let y = self.critic_targets(batch)?;

        // Critic regression toward y.
        let critic_input = states.hcat(&batch.actions_matrix())?;
        let q = self.critic.forward_cached(&critic_input)?;
        let (critic_loss, upstream, td_errors) = weighted_td_loss(&q, &y, weights)?;
        let (critic_grads, _) = self.critic.backward(&upstream)?;
        self.critic_opt.apply(&mut self.critic, &critic_grads)?;

        // Actor ascent on Q(s, actor(s)).
        let b = batch.len() as f64;
        let actor_out = self.actor.forward_cached(&states)?;
        let mut scaled = actor_out.clone();
        scale_columns(&mut scaled, &self.action_bound);
        let q_pi = self.critic.forward_cached(&states.hcat(&scaled)?)?;
        let actor_loss = -q_pi.data().iter().sum::<f64>() / b;
        let upstream_q = Matrix::from_vec(batch.len(), 1, vec![-1.0 / b; batch.len()])?;
        let (_, d_input) = self.critic.backward(&upstream_q)?;
        // Gradient w.r.t. the scaled action columns, chained through the
        // bound scaling back to the actor's tanh output.
        let mut d_action = Matrix::zeros(batch.len(), self.action_dim);
        for r in 0..batch.len() {
            for c in 0..self.action_dim {
                d_action[(r, c)] = d_input[(r, self.state_dim + c)] * self.action_bound[c];
            }
        }
        let (actor_grads, _) = self.actor.backward(&d_action)?;
        self.actor_opt.apply(&mut self.actor, &actor_grads)?;

        soft_update(&mut self.actor_target, &self.actor, self.params.tau)?;
        soft_update(&mut self.critic_target, &self.critic, self.params.tau)?;

        check_finite(
            &[critic_loss, actor_loss],
            &[&self.actor, &self.critic, &self.actor_target, &self.critic_target],
            "ddpg update",
        )?;
        Ok(UpdateDiagnostics {
            critic_loss,
            actor_loss: Some(actor_loss),
            td_errors,
        })
    }

    fn save_checkpoint(&self, dir: &Path, env_name: &str, step: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = KvDoc::new();
        manifest.push("algo", "ddpg");
        manifest.push("env", env_name);
        manifest.push("step", step);
        manifest.push("state_dim", self.state_dim);
        manifest.push("action_dim", self.action_dim);
        manifest.push("action_bound", join_f64(&self.action_bound));
        manifest.push("hidden", join_usize(&self.params.hidden));
        manifest.push("actor_lr", self.params.actor_lr);
        manifest.push("critic_lr", self.params.critic_lr);
        manifest.push("tau", self.params.tau);
        manifest.push("gamma", self.params.gamma);
        manifest.push("exploration_noise_std", self.params.exploration_noise_std);
        manifest.save(&dir.join("manifest.txt"))?;
        numcore::snapshot::save(&self.actor, &dir.join("actor.mlp"))?;
        numcore::snapshot::save(&self.critic, &dir.join("critic.mlp"))?;
        numcore::snapshot::save(&self.actor_target, &dir.join("actor_target.mlp"))?;
        numcore::snapshot::save(&self.critic_target, &dir.join("critic_target.mlp"))?;
        Ok(())
    }
}

pub(crate) fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn parse_f64_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad float '{s}'")))
        })
        .collect()
}

pub(crate) fn parse_usize_list(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad integer '{s}'")))
        })
        .collect()
}
