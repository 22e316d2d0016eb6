//! Twin delayed DDPG.
//!
//! Three changes over DDPG: the bootstrap action is smoothed with clipped
//! Gaussian noise, the target is the minimum over two independent critics,
//! and the actor plus all targets update only every `policy_delay` critic
//! updates (on update indices divisible by the delay).

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::agents::ddpg::{join_f64, join_usize, parse_f64_list, parse_usize_list};
use crate::agents::{
    act_impl, check_finite, check_gamma_tau, clipped_double_q_target, layer_sizes,
    weighted_td_loss, Agent, UpdateDiagnostics,
};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::numcore::{self, soft_update, AdamState, Matrix, Mlp, OutputActivation};
use crate::replay::{scale_columns, CandidateBatch};
use crate::rng::SeedRng;

#[derive(Debug, Clone)]
pub struct Td3Params {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub exploration_noise_std: f64,
    /// Actor/targets update once per this many critic updates.
    pub policy_delay: u64,
    /// Std of the clipped noise added to the bootstrap action (raw units).
    pub smoothing_noise_std: f64,
    /// Clip bound for that noise.
    pub smoothing_noise_clip: f64,
}

impl Default for Td3Params {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            tau: 0.005,
            gamma: 0.99,
            exploration_noise_std: 0.1,
            policy_delay: 2,
            smoothing_noise_std: 0.2,
            smoothing_noise_clip: 0.5,
        }
    }
}

pub struct Td3Agent {
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    actor_target: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    params: Td3Params,
    action_bound: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
}

impl Td3Agent {
    /// Initialization order is fixed (actor, critic1, critic2) so a seed
    /// pins every weight; the critics share a structure but draw
    /// independently. Targets start as exact copies.
    pub fn new(spec: &EnvSpec, params: Td3Params, rng: &mut SeedRng) -> Result<Self> {
        check_gamma_tau(params.gamma, params.tau)?;
        if params.policy_delay == 0 {
            return Err(Error::Config("policy delay must be >= 1".into()));
        }
        if params.exploration_noise_std < 0.0
            || params.smoothing_noise_std < 0.0
            || params.smoothing_noise_clip < 0.0
        {
            return Err(Error::Config("noise parameters must be >= 0".into()));
        }
        let (m, l) = (spec.state_dim, spec.action_dim);
        let actor = Mlp::new(&layer_sizes(m, &params.hidden, l), OutputActivation::Tanh, rng)?;
        let critic_sizes = layer_sizes(m + l, &params.hidden, 1);
        let critic1 = Mlp::new(&critic_sizes, OutputActivation::Identity, rng)?;
        let critic2 = Mlp::new(&critic_sizes, OutputActivation::Identity, rng)?;
        let actor_opt = AdamState::new(&actor, params.actor_lr)?;
        let critic1_opt = AdamState::new(&critic1, params.critic_lr)?;
        let critic2_opt = AdamState::new(&critic2, params.critic_lr)?;
        Ok(Self {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_opt,
            critic1_opt,
            critic2_opt,
            params,
            action_bound: spec.action_bound.clone(),
            state_dim: m,
            action_dim: l,
        })
    }

    pub fn params(&self) -> &Td3Params {
        &self.params
    }

    pub fn critic1(&self) -> &Mlp {
        &self.critic1
    }

    pub fn critic2(&self) -> &Mlp {
        &self.critic2
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic1_target(&self) -> &Mlp {
        &self.critic1_target
    }

    pub fn critic2_target(&self) -> &Mlp {
        &self.critic2_target
    }

    /// Force both critics (and their targets) to the given network, for
    /// reduction comparisons against a single-critic agent.
    pub fn force_critics(&mut self, critic: &Mlp) -> Result<()> {
        if !critic.same_architecture(&self.critic1) {
            return Err(Error::Shape("critic architecture mismatch".into()));
        }
        self.critic1 = critic.clone();
        self.critic2 = critic.clone();
        self.critic1_target = critic.clone();
        self.critic2_target = critic.clone();
        Ok(())
    }

    /// Overwrite the target actor, for reduction comparisons.
    pub fn force_actor_target(&mut self, actor: &Mlp) -> Result<()> {
        if !actor.same_architecture(&self.actor_target) {
            return Err(Error::Shape("actor architecture mismatch".into()));
        }
        self.actor_target = actor.clone();
        Ok(())
    }

    /// Bootstrap targets: smoothed target action, then the minimum over both
    /// target critics. Draws `b * l` noise samples from `rng` unless the
    /// smoothing std is zero, in which case `rng` is untouched.
    pub fn critic_targets(&self, batch: &CandidateBatch, rng: &mut SeedRng) -> Result<Vec<f64>> {
        let next_states = batch.next_states_matrix();
        let mut next_actions = self.actor_target.forward(&next_states)?;
        scale_columns(&mut next_actions, &self.action_bound);
        if self.params.smoothing_noise_std > 0.0 {
            let clip = self.params.smoothing_noise_clip;
            for r in 0..next_actions.rows() {
                for (v, &b) in next_actions.row_mut(r).iter_mut().zip(&self.action_bound) {
                    let z: f64 = StandardNormal.sample(rng);
                    let noise = (self.params.smoothing_noise_std * z).clamp(-clip, clip);
                    *v = (*v + noise).clamp(-b, b);
                }
            }
        }
        let input = next_states.hcat(&next_actions)?;
        let q1 = self.critic1_target.forward(&input)?;
        let q2 = self.critic2_target.forward(&input)?;
        let rewards = batch.rewards();
        let dones = batch.dones();
        Ok((0..batch.len())
            .map(|i| {
                clipped_double_q_target(
                    rewards[i],
                    self.params.gamma,
                    q1[(i, 0)],
                    q2[(i, 0)],
                    dones[i],
                )
            })
            .collect())
    }

    pub(crate) fn load_checkpoint_parts(dir: &Path, manifest: &KvDoc) -> Result<Self> {
        let spec = EnvSpec {
            state_dim: manifest.require_parsed("state_dim")?,
            action_dim: manifest.require_parsed("action_dim")?,
            action_bound: parse_f64_list(manifest.require("action_bound")?)?,
            max_episode_steps: 0,
        };
        let params = Td3Params {
            hidden: parse_usize_list(manifest.require("hidden")?)?,
            actor_lr: manifest.require_parsed("actor_lr")?,
            critic_lr: manifest.require_parsed("critic_lr")?,
            tau: manifest.require_parsed("tau")?,
            gamma: manifest.require_parsed("gamma")?,
            exploration_noise_std: manifest.require_parsed("exploration_noise_std")?,
            policy_delay: manifest.require_parsed("policy_delay")?,
            smoothing_noise_std: manifest.require_parsed("smoothing_noise_std")?,
            smoothing_noise_clip: manifest.require_parsed("smoothing_noise_clip")?,
        };
        let mut init = crate::rng::derive(0, crate::rng::Stream::Init);
        let mut agent = Td3Agent::new(&spec, params, &mut init)?;
        agent.actor = numcore::snapshot::load(&dir.join("actor.mlp"))?;
        agent.critic1 = numcore::snapshot::load(&dir.join("critic1.mlp"))?;
        agent.critic2 = numcore::snapshot::load(&dir.join("critic2.mlp"))?;
        agent.actor_target = numcore::snapshot::load(&dir.join("actor_target.mlp"))?;
        agent.critic1_target = numcore::snapshot::load(&dir.join("critic1_target.mlp"))?;
        agent.critic2_target = numcore::snapshot::load(&dir.join("critic2_target.mlp"))?;
        if !agent.actor.same_architecture(&agent.actor_target)
            || !agent.critic1.same_architecture(&agent.critic1_target)
            || !agent.critic2.same_architecture(&agent.critic2_target)
        {
            return Err(Error::Shape("checkpoint architecture mismatch".into()));
        }
        Ok(agent)
    }
}

impl Agent for Td3Agent {
    fn algo_name(&self) -> &'static str {
        "td3"
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
        update_index: u64,
        rng: &mut SeedRng,
    ) -> Result<UpdateDiagnostics> {
        if batch.is_empty() {
            return Err(Error::InsufficientSamples("empty update batch".into()));
        }
        let states = batch.states_matrix();
        let y = self.critic_targets(batch, rng)?;
        let critic_input = states.hcat(&batch.actions_matrix())?;

        // Both critics regress to the shared target; PER priorities follow
        // the first critic's error.
        let q1 = self.critic1.forward_cached(&critic_input)?;
        let (loss1, upstream1, td_errors) = weighted_td_loss(&q1, &y, weights)?;
        let (grads1, _) = self.critic1.backward(&upstream1)?;
        self.critic1_opt.apply(&mut self.critic1, &grads1)?;

        let q2 = self.critic2.forward_cached(&critic_input)?;
        let (loss2, upstream2, _) = weighted_td_loss(&q2, &y, weights)?;
        let (grads2, _) = self.critic2.backward(&upstream2)?;
        self.critic2_opt.apply(&mut self.critic2, &grads2)?;

        let critic_loss = 0.5 * (loss1 + loss2);
        let mut actor_loss = None;

        if update_index % self.params.policy_delay == 0 {
            let b = batch.len() as f64;
            let actor_out = self.actor.forward_cached(&states)?;
            let mut scaled = actor_out.clone();
            scale_columns(&mut scaled, &self.action_bound);
            let q_pi = self.critic1.forward_cached(&states.hcat(&scaled)?)?;
            actor_loss = Some(-q_pi.data().iter().sum::<f64>() / b);
            let upstream_q = Matrix::from_vec(batch.len(), 1, vec![-1.0 / b; batch.len()])?;
            let (_, d_input) = self.critic1.backward(&upstream_q)?;
            let mut d_action = Matrix::zeros(batch.len(), self.action_dim);
            for r in 0..batch.len() {
                for c in 0..self.action_dim {
                    d_action[(r, c)] = d_input[(r, self.state_dim + c)] * self.action_bound[c];
                }
            }
            let (actor_grads, _) = self.actor.backward(&d_action)?;
            self.actor_opt.apply(&mut self.actor, &actor_grads)?;

            soft_update(&mut self.actor_target, &self.actor, self.params.tau)?;
            soft_update(&mut self.critic1_target, &self.critic1, self.params.tau)?;
            soft_update(&mut self.critic2_target, &self.critic2, self.params.tau)?;
        }

        check_finite(
            &[critic_loss, actor_loss.unwrap_or(0.0)],
            &[
                &self.actor,
                &self.critic1,
                &self.critic2,
                &self.actor_target,
                &self.critic1_target,
                &self.critic2_target,
            ],
            "td3 update",
        )?;
        Ok(UpdateDiagnostics {
            critic_loss,
            actor_loss,
            td_errors,
        })
    }

    fn save_checkpoint(&self, dir: &Path, env_name: &str, step: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = KvDoc::new();
        manifest.push("algo", "td3");
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
        manifest.push("policy_delay", self.params.policy_delay);
        manifest.push("smoothing_noise_std", self.params.smoothing_noise_std);
        manifest.push("smoothing_noise_clip", self.params.smoothing_noise_clip);
        manifest.save(&dir.join("manifest.txt"))?;
        numcore::snapshot::save(&self.actor, &dir.join("actor.mlp"))?;
        numcore::snapshot::save(&self.critic1, &dir.join("critic1.mlp"))?;
        numcore::snapshot::save(&self.critic2, &dir.join("critic2.mlp"))?;
        numcore::snapshot::save(&self.actor_target, &dir.join("actor_target.mlp"))?;
        numcore::snapshot::save(&self.critic1_target, &dir.join("critic1_target.mlp"))?;
        numcore::snapshot::save(&self.critic2_target, &dir.join("critic2_target.mlp"))?;
        Ok(())
    }
}
