//! Run configuration: defaults per algorithm, key=value config files, and
//! validation.

use std::path::PathBuf;

use crate::agents::ddpg::{join_usize, parse_usize_list};
use crate::error::{Error, Result};
use crate::kv::KvDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Ddpg,
    Td3,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Ddpg => "ddpg",
            Algo::Td3 => "td3",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "ddpg" => Ok(Algo::Ddpg),
            "td3" => Ok(Algo::Td3),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected 'ddpg' or 'td3')"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayStrategy {
    Vanilla,
    Per,
    Klper,
}

impl ReplayStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplayStrategy::Vanilla => "vanilla",
            ReplayStrategy::Per => "per",
            ReplayStrategy::Klper => "klper",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "vanilla" => Ok(ReplayStrategy::Vanilla),
            "per" => Ok(ReplayStrategy::Per),
            "klper" => Ok(ReplayStrategy::Klper),
            other => Err(Error::Config(format!(
                "unknown replay strategy '{other}' (expected 'vanilla', 'per', or 'klper')"
            ))),
        }
    }

    pub fn all() -> [ReplayStrategy; 3] {
        [
            ReplayStrategy::Vanilla,
            ReplayStrategy::Per,
            ReplayStrategy::Klper,
        ]
    }
}

/// Full description of one training run. `(config, seed)` determines every
/// byte of the run's outputs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algo: Algo,
    pub replay: ReplayStrategy,
    pub env: String,
    pub seed: u64,
    pub total_steps: u64,
    /// Random-action prefill before the first gradient update.
    pub warmup_steps: u64,
    pub batch_size: usize,
    /// Candidate batches per KLPER selection.
    pub candidates: usize,
    /// Per-dimension variance of the KL target distribution.
    pub kl_sigma: f64,
    pub per_alpha: f64,
    pub per_beta: f64,
    /// Apply PER importance weights to the critic loss (off = ablation).
    pub per_weights: bool,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub exploration_noise_std: f64,
    pub policy_delay: u64,
    pub smoothing_noise_std: f64,
    pub smoothing_noise_clip: f64,
    pub replay_capacity: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// When false (the default) the wallclock_s column is written as 0 so
    /// metrics files stay byte-reproducible; when true it records elapsed
    /// seconds and reproducibility of that column is forfeited.
    pub record_wallclock: bool,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Per-algorithm defaults at desk scale.
    pub fn defaults(algo: Algo) -> Self {
        let common = Self {
            algo,
            replay: ReplayStrategy::Vanilla,
            env: "pendulum".to_string(),
            seed: 0,
            total_steps: 50_000,
            warmup_steps: 10_000,
            batch_size: 64,
            candidates: 4,
            kl_sigma: 0.1,
            per_alpha: 0.6,
            per_beta: 0.4,
            per_weights: true,
            hidden: vec![128, 128],
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            tau: 0.005,
            gamma: 0.99,
            exploration_noise_std: 0.1,
            policy_delay: 1,
            smoothing_noise_std: 0.0,
            smoothing_noise_clip: 0.5,
            replay_capacity: 100_000,
            eval_interval: 2_500,
            eval_episodes: 5,
            record_wallclock: false,
            out_dir: PathBuf::from("runs/out"),
        };
        match algo {
            Algo::Ddpg => common,
            Algo::Td3 => Self {
                warmup_steps: 25_000,
                batch_size: 256,
                candidates: 8,
                kl_sigma: 0.2,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                policy_delay: 2,
                smoothing_noise_std: 0.2,
                ..common
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be >= 2 (covariance needs it), got {}",
                self.batch_size
            )));
        }
        if self.candidates < 1 {
            return Err(Error::Config("candidates must be >= 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be > 0".into()));
        }
        if self.eval_interval > self.total_steps {
            return Err(Error::Config(format!(
                "eval interval {} exceeds total steps {}",
                self.eval_interval, self.total_steps
            )));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup {} exceeds total steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval episodes must be >= 1".into()));
        }
        if !(self.kl_sigma > 0.0) {
            return Err(Error::Config(format!(
                "kl sigma must be > 0, got {}",
                self.kl_sigma
            )));
        }
        if self.per_alpha < 0.0 || self.per_beta < 0.0 {
            return Err(Error::Config("PER alpha/beta must be >= 0".into()));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "replay capacity {} smaller than batch size {}",
                self.replay_capacity, self.batch_size
            )));
        }
        if self.policy_delay == 0 {
            return Err(Error::Config("policy delay must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must be in (0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// Apply `key = value` overrides; unknown keys are config errors.
    pub(crate) fn apply_kv(&mut self, doc: &KvDoc) -> Result<()> {
        for (key, value) in doc.pairs() {
            self.apply_pair(key, value)?;
        }
        Ok(())
    }

    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        fn parsed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
        }
        match key {
            "algo" => self.algo = Algo::parse(value)?,
            "replay" => self.replay = ReplayStrategy::parse(value)?,
            "env" => self.env = value.to_string(),
            "seed" => self.seed = parsed(key, value)?,
            "total_steps" => self.total_steps = parsed(key, value)?,
            "warmup_steps" => self.warmup_steps = parsed(key, value)?,
            "batch_size" => self.batch_size = parsed(key, value)?,
            "candidates" => self.candidates = parsed(key, value)?,
            "kl_sigma" => self.kl_sigma = parsed(key, value)?,
            "per_alpha" => self.per_alpha = parsed(key, value)?,
            "per_beta" => self.per_beta = parsed(key, value)?,
            "per_weights" => self.per_weights = parsed(key, value)?,
            "hidden" => self.hidden = parse_usize_list(value).map_err(|_| {
                Error::Config(format!("key 'hidden': cannot parse '{value}'"))
            })?,
            "actor_lr" => self.actor_lr = parsed(key, value)?,
            "critic_lr" => self.critic_lr = parsed(key, value)?,
            "tau" => self.tau = parsed(key, value)?,
            "gamma" => self.gamma = parsed(key, value)?,
            "exploration_noise_std" => self.exploration_noise_std = parsed(key, value)?,
            "policy_delay" => self.policy_delay = parsed(key, value)?,
            "smoothing_noise_std" => self.smoothing_noise_std = parsed(key, value)?,
            "smoothing_noise_clip" => self.smoothing_noise_clip = parsed(key, value)?,
            "replay_capacity" => self.replay_capacity = parsed(key, value)?,
            "eval_interval" => self.eval_interval = parsed(key, value)?,
            "eval_episodes" => self.eval_episodes = parsed(key, value)?,
            "record_wallclock" => self.record_wallclock = parsed(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => {
                return Err(Error::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Apply overrides from `key = value` text; unknown keys are config
    /// errors.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        self.apply_kv(&KvDoc::parse_str(text)?)
    }

    /// The fully-resolved config as `key = value` text; written next to each
    /// run's metrics.
    pub fn render(&self) -> String {
        self.to_kv().render()
    }

    pub(crate) fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("algo", self.algo.as_str());
        doc.push("replay", self.replay.as_str());
        doc.push("env", &self.env);
        doc.push("seed", self.seed);
        doc.push("total_steps", self.total_steps);
        doc.push("warmup_steps", self.warmup_steps);
        doc.push("batch_size", self.batch_size);
        doc.push("candidates", self.candidates);
        doc.push("kl_sigma", self.kl_sigma);
        doc.push("per_alpha", self.per_alpha);
        doc.push("per_beta", self.per_beta);
        doc.push("per_weights", self.per_weights);
        doc.push("hidden", join_usize(&self.hidden));
        doc.push("actor_lr", self.actor_lr);
        doc.push("critic_lr", self.critic_lr);
        doc.push("tau", self.tau);
        doc.push("gamma", self.gamma);
        doc.push("exploration_noise_std", self.exploration_noise_std);
        doc.push("policy_delay", self.policy_delay);
        doc.push("smoothing_noise_std", self.smoothing_noise_std);
        doc.push("smoothing_noise_clip", self.smoothing_noise_clip);
        doc.push("replay_capacity", self.replay_capacity);
        doc.push("eval_interval", self.eval_interval);
        doc.push("eval_episodes", self.eval_episodes);
        doc.push("record_wallclock", self.record_wallclock);
        doc.push("out_dir", self.out_dir.display());
        doc
    }
}
