//! The training loop, evaluation protocol, and the compare matrix.
//!
//! One run: seed the streams, prefill the buffer with `warmup_steps` random
//! actions, then per environment step act-with-noise, store, select a batch
//! under the configured replay strategy, update the agent, and every
//! `eval_interval` steps run the deterministic policy for `eval_episodes`
//! episodes and append a metrics row. A KL score is logged every update for
//! all three strategies: KLPER logs the selected and candidate-mean scores,
//! vanilla and PER log the score of the batch they happened to use, so the
//! traces stay comparable.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;

use crate::agents::{Agent, DdpgAgent, DdpgParams, Td3Agent, Td3Params};
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::gauss::{fit_batch_policy, kl_to_isotropic, KlTarget};
use crate::harness::config::{Algo, ReplayStrategy, RunConfig};
use crate::harness::metrics::{emit_metrics, render_csv, MetricsRow};
use crate::replay::{
    compute_action_deltas, klper_select, PerState, ReplayBuffer, Transition,
};
use crate::rng::{RunStreams, SeedRng};

/// Where a finished (or diverged) run left its outputs.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub metrics_path: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

/// Run the deterministic policy (no exploration noise) for `episodes`
/// episodes; returns undiscounted per-episode returns with their mean and
/// population std.
pub fn evaluate(
    agent: &dyn Agent,
    env: &mut dyn Environment,
    episodes: usize,
    rng: &mut SeedRng,
) -> Result<EvalStats> {
    if episodes == 0 {
        return Err(Error::Config("need at least one evaluation episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        let mut total = 0.0;
        loop {
            let action = agent.act(&state, false, rng)?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.done {
                break;
            }
            state = step.next_state;
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(EvalStats {
        mean,
        std: var.sqrt(),
        returns,
    })
}

/// Running means over one metrics window.
#[derive(Default)]
struct Window {
    critic_sum: f64,
    actor_sum: f64,
    actor_n: u64,
    kappa_selected_sum: f64,
    kappa_mean_sum: f64,
    n: u64,
}

impl Window {
    fn record(&mut self, critic_loss: f64, actor_loss: Option<f64>, kappa: (f64, f64)) {
        self.critic_sum += critic_loss;
        if let Some(a) = actor_loss {
            self.actor_sum += a;
            self.actor_n += 1;
        }
        self.kappa_selected_sum += kappa.0;
        self.kappa_mean_sum += kappa.1;
        self.n += 1;
    }

    fn drain(&mut self) -> (f64, f64, f64, f64) {
        let mean = |sum: f64, n: u64| if n == 0 { f64::NAN } else { sum / n as f64 };
        let out = (
            mean(self.critic_sum, self.n),
            mean(self.actor_sum, self.actor_n),
            mean(self.kappa_selected_sum, self.n),
            mean(self.kappa_mean_sum, self.n),
        );
        *self = Window::default();
        out
    }
}

fn build_agent(config: &RunConfig, spec: &crate::envs::EnvSpec, rng: &mut SeedRng) -> Result<Box<dyn Agent>> {
    Ok(match config.algo {
        Algo::Ddpg => Box::new(DdpgAgent::new(
            spec,
            DdpgParams {
                hidden: config.hidden.clone(),
                actor_lr: config.actor_lr,
                critic_lr: config.critic_lr,
                tau: config.tau,
                gamma: config.gamma,
                exploration_noise_std: config.exploration_noise_std,
            },
            rng,
        )?),
        Algo::Td3 => Box::new(Td3Agent::new(
            spec,
            Td3Params {
                hidden: config.hidden.clone(),
                actor_lr: config.actor_lr,
                critic_lr: config.critic_lr,
                tau: config.tau,
                gamma: config.gamma,
                exploration_noise_std: config.exploration_noise_std,
                policy_delay: config.policy_delay,
                smoothing_noise_std: config.smoothing_noise_std,
                smoothing_noise_clip: config.smoothing_noise_clip,
            },
            rng,
        )?),
    })
}

fn random_action(bound: &[f64], rng: &mut SeedRng) -> Vec<f64> {
    bound.iter().map(|&b| rng.random_range(-b..b)).collect()
}

/// Execute one full training run and write `metrics.csv`, `config.txt`, and
/// a final `checkpoint/` under the configured output directory.
///
/// On divergence the metrics collected so far are still written and the
/// divergence error is returned; no checkpoint is produced.
pub fn train(config: &RunConfig) -> Result<RunArtifacts> {
    train_with(config, &mut |_| {})
}

/// As [`train`], invoking `on_row` after each metrics row is recorded.
pub fn train_with(
    config: &RunConfig,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<RunArtifacts> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let metrics_path = config.out_dir.join("metrics.csv");
    let checkpoint_dir = config.out_dir.join("checkpoint");
    config.to_kv().save(&config.out_dir.join("config.txt"))?;

    let mut streams = RunStreams::new(config.seed);
    let mut env = make_env(&config.env)?;
    let mut eval_env = make_env(&config.env)?;
    let spec = env.spec().clone();
    let mut agent = build_agent(config, &spec, &mut streams.init)?;
    let mut buffer = ReplayBuffer::new(spec.state_dim, spec.action_dim, config.replay_capacity)?;
    let mut per = match config.replay {
        ReplayStrategy::Per => Some(PerState::new(
            config.replay_capacity,
            config.per_alpha,
            config.per_beta,
        )?),
        _ => None,
    };
    let kl_target = KlTarget::new(config.kl_sigma, spec.action_dim)?;

    let started = Instant::now();
    let mut state = env.reset(&mut streams.env);
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut window = Window::default();
    let mut outcome: Result<()> = Ok(());

    for step in 1..=config.total_steps {
        let action = if step <= config.warmup_steps {
            random_action(&spec.action_bound, &mut streams.explore)
        } else {
            agent.act(&state, true, &mut streams.explore)?
        };
        let step_result = env.step(&action)?;
        let slot = buffer.push(Transition {
            state: std::mem::take(&mut state),
            action,
            reward: step_result.reward,
            next_state: step_result.next_state.clone(),
            done: step_result.done,
        })?;
        if let Some(per) = per.as_mut() {
            per.on_push(slot);
        }
        state = if step_result.done {
            env.reset(&mut streams.env)
        } else {
            step_result.next_state
        };

        if step > config.warmup_steps {
            let update_index = step - config.warmup_steps - 1;
            match run_update(
                config,
                agent.as_mut(),
                &buffer,
                per.as_mut(),
                &kl_target,
                update_index,
                &mut streams.replay,
            ) {
                Ok((diag, kappa)) => window.record(diag.critic_loss, diag.actor_loss, kappa),
                Err(err @ Error::Divergence(_)) => {
                    outcome = Err(err);
                    break;
                }
                Err(other) => return Err(other),
            }
        }

        if step % config.eval_interval == 0 {
            let stats = evaluate(
                agent.as_ref(),
                eval_env.as_mut(),
                config.eval_episodes,
                &mut streams.eval,
            )?;
            let (critic_loss, actor_loss, kappa_selected, kappa_candidates_mean) = window.drain();
            rows.push(MetricsRow {
                step,
                eval_return_mean: stats.mean,
                eval_return_std: stats.std,
                critic_loss,
                actor_loss,
                kappa_selected,
                kappa_candidates_mean,
                wallclock_s: if config.record_wallclock {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
            on_row(rows.last().unwrap());
        }
    }

    // Metrics survive divergence; an interrupted run may have zero rows, in
    // which case only the header is written.
    if rows.is_empty() {
        std::fs::write(&metrics_path, render_csv(&[])).map_err(|e| Error::io(&metrics_path, e))?;
    } else {
        emit_metrics(&rows, &metrics_path)?;
    }
    match outcome {
        Ok(()) => {
            agent.save_checkpoint(&checkpoint_dir, env.name(), config.total_steps)?;
            Ok(RunArtifacts {
                config: config.clone(),
                metrics_path,
                checkpoint_dir,
                rows,
            })
        }
        Err(err) => Err(err),
    }
}

/// Select a batch under the configured strategy, update the agent, and
/// report the (selected, candidate-mean) KL scores for logging.
fn run_update(
    config: &RunConfig,
    agent: &mut dyn Agent,
    buffer: &ReplayBuffer,
    per: Option<&mut PerState>,
    kl_target: &KlTarget,
    update_index: u64,
    rng: &mut SeedRng,
) -> Result<(crate::agents::UpdateDiagnostics, (f64, f64))> {
    let diagnostic_kappa = |batch: &crate::replay::CandidateBatch,
                            agent: &dyn Agent|
     -> Result<f64> {
        let deltas = compute_action_deltas(batch, agent.actor(), agent.action_bound())?;
        kl_to_isotropic(&fit_batch_policy(&deltas)?, kl_target)
    };

    match config.replay {
        ReplayStrategy::Vanilla => {
            let batch = buffer.sample_uniform(config.batch_size, rng)?;
            let kappa = diagnostic_kappa(&batch, agent)?;
            let diag = agent.update(&batch, None, update_index, rng)?;
            Ok((diag, (kappa, kappa)))
        }
        ReplayStrategy::Per => {
            let per = per.expect("PER state exists for the PER strategy");
            let (batch, weights) = per.sample(buffer, config.batch_size, rng)?;
            let kappa = diagnostic_kappa(&batch, agent)?;
            let weights = config.per_weights.then_some(weights);
            let diag = agent.update(&batch, weights.as_deref(), update_index, rng)?;
            per.update_priorities(batch.indices(), &diag.td_errors)?;
            Ok((diag, (kappa, kappa)))
        }
        ReplayStrategy::Klper => {
            let selection = klper_select(
                buffer,
                config.candidates,
                config.batch_size,
                agent.actor(),
                agent.action_bound(),
                kl_target,
                rng,
            )?;
            let kappa_selected = selection
                .chosen
                .kappa()
                .expect("selection scores its winner");
            let kappa_mean = selection.kappa_mean();
            let diag = agent.update(&selection.chosen, None, update_index, rng)?;
            Ok((diag, (kappa_selected, kappa_mean)))
        }
    }
}

/// Sequentially run the {vanilla, per, klper} x seeds matrix, one output
/// directory per cell, and return the artifacts in execution order.
pub fn compare(base: &RunConfig, seeds: &[u64]) -> Result<Vec<RunArtifacts>> {
    if seeds.is_empty() {
        return Err(Error::Config("compare needs at least one seed".into()));
    }
    let mut artifacts = Vec::with_capacity(3 * seeds.len());
    for strategy in ReplayStrategy::all() {
        for &seed in seeds {
            let mut cell = base.clone();
            cell.replay = strategy;
            cell.seed = seed;
            cell.out_dir = base
                .out_dir
                .join(format!("{}_{}_seed{}", cell.algo.as_str(), strategy.as_str(), seed));
            artifacts.push(train(&cell)?);
        }
    }
    Ok(artifacts)
}
