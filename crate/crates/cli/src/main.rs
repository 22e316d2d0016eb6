//! Experiment runner.
//!
//! ```text
//! klper train   --algo ddpg --replay klper --env pendulum --seed 0 --out runs/demo
//! klper eval    --checkpoint runs/demo/checkpoint --episodes 5
//! klper compare --algo ddpg --env pendulum --seeds 0..4 --out runs/matrix
//! ```
//!
//! Exit codes: 0 success, 2 usage/config error, 3 divergence abort.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use klper::envs::make_env;
use klper::error::Error;
use klper::harness::{
    compare, evaluate, parse_seed_list, train_with, Algo, ReplayStrategy, RunConfig,
};
use klper::rng::{derive, Stream};

#[derive(Parser)]
#[command(name = "klper", version, about = "DDPG/TD3 training with uniform, PER, and KLPER replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training configuration.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint with the deterministic policy.
    Eval(EvalArgs),
    /// Run the {vanilla, per, klper} x seeds matrix.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Config file with `key = value` lines; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm: ddpg or td3.
    #[arg(long)]
    algo: Option<String>,
    /// Replay strategy: vanilla, per, or klper.
    #[arg(long)]
    replay: Option<String>,
    /// Environment name: pendulum or reacher2d.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_steps: Option<u64>,
    /// Random-action prefill before the first update.
    #[arg(long)]
    warmup: Option<u64>,
    /// Mini-batch size (>= 2).
    #[arg(long)]
    batch: Option<usize>,
    /// KLPER candidate batches per update.
    #[arg(long)]
    candidates: Option<usize>,
    /// KL target per-dimension variance.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    per_alpha: Option<f64>,
    #[arg(long)]
    per_beta: Option<f64>,
    /// Apply PER importance weights (disable for ablation).
    #[arg(long)]
    per_weights: Option<bool>,
    /// Hidden layer sizes, comma separated (e.g. 64,64).
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    exploration_noise: Option<f64>,
    /// Actor/target update period (TD3 delayed updates).
    #[arg(long)]
    policy_delay: Option<u64>,
    /// TD3 target smoothing noise std.
    #[arg(long)]
    smoothing_noise: Option<f64>,
    /// TD3 target smoothing noise clip bound.
    #[arg(long)]
    smoothing_clip: Option<f64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Record elapsed seconds in the wallclock_s column (breaks byte-level
    /// reproducibility of the metrics file).
    #[arg(long)]
    record_wallclock: bool,
    /// Output directory for metrics, config echo, and checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Environment override; defaults to the checkpoint's environment.
    #[arg(long)]
    env: Option<String>,
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Seeds: single (`7`), comma list (`0,2,4`), or inclusive range (`0..4`).
    #[arg(long, default_value = "0..4")]
    seeds: String,
    /// Run each matrix cell as its own child process.
    #[arg(long)]
    parallel: bool,
}

fn build_config(flags: &TrainFlags) -> Result<RunConfig, Error> {
    let file_text = match &flags.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?,
        ),
        None => None,
    };
    // Defaults depend on the algorithm, so resolve it first: flag, then
    // config file, then ddpg.
    let algo = match (&flags.algo, &file_text) {
        (Some(raw), _) => Algo::parse(raw)?,
        (None, Some(text)) => {
            let mut probe = RunConfig::defaults(Algo::Ddpg);
            probe.apply_config_text(text)?;
            probe.algo
        }
        (None, None) => Algo::Ddpg,
    };
    let mut cfg = RunConfig::defaults(algo);
    if let Some(text) = &file_text {
        cfg.apply_config_text(text)?;
    }
    cfg.algo = algo;

    if let Some(raw) = &flags.replay {
        cfg.replay = ReplayStrategy::parse(raw)?;
    }
    if let Some(env) = &flags.env {
        cfg.env = env.clone();
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.total_steps {
        cfg.total_steps = v;
    }
    if let Some(v) = flags.warmup {
        cfg.warmup_steps = v;
    }
    if let Some(v) = flags.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.candidates {
        cfg.candidates = v;
    }
    if let Some(v) = flags.sigma {
        cfg.kl_sigma = v;
    }
    if let Some(v) = flags.per_alpha {
        cfg.per_alpha = v;
    }
    if let Some(v) = flags.per_beta {
        cfg.per_beta = v;
    }
    if let Some(v) = flags.per_weights {
        cfg.per_weights = v;
    }
    if let Some(raw) = &flags.hidden {
        cfg.apply_pair("hidden", raw)?;
    }
    if let Some(v) = flags.actor_lr {
        cfg.actor_lr = v;
    }
    if let Some(v) = flags.critic_lr {
        cfg.critic_lr = v;
    }
    if let Some(v) = flags.tau {
        cfg.tau = v;
    }
    if let Some(v) = flags.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = flags.exploration_noise {
        cfg.exploration_noise_std = v;
    }
    if let Some(v) = flags.policy_delay {
        cfg.policy_delay = v;
    }
    if let Some(v) = flags.smoothing_noise {
        cfg.smoothing_noise_std = v;
    }
    if let Some(v) = flags.smoothing_clip {
        cfg.smoothing_noise_clip = v;
    }
    if let Some(v) = flags.replay_capacity {
        cfg.replay_capacity = v;
    }
    if let Some(v) = flags.eval_interval {
        cfg.eval_interval = v;
    }
    if let Some(v) = flags.eval_episodes {
        cfg.eval_episodes = v;
    }
    if flags.record_wallclock {
        cfg.record_wallclock = true;
    }
    if let Some(out) = &flags.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_train(args: &TrainArgs) -> Result<(), Error> {
    let cfg = build_config(&args.flags)?;
    println!(
        "training {} + {} on {} (seed {}, {} steps) -> {}",
        cfg.algo.as_str(),
        cfg.replay.as_str(),
        cfg.env,
        cfg.seed,
        cfg.total_steps,
        cfg.out_dir.display()
    );
    let artifacts = train_with(&cfg, &mut |row| {
        println!(
            "  step {:>8}  eval_return {:>10.2} +- {:<8.2} critic_loss {:<12.6} kappa {:.4}",
            row.step, row.eval_return_mean, row.eval_return_std, row.critic_loss, row.kappa_selected
        );
    })?;
    println!("metrics: {}", artifacts.metrics_path.display());
    println!("checkpoint: {}", artifacts.checkpoint_dir.display());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<(), Error> {
    let (agent, meta) = klper::agents::load_checkpoint(&args.checkpoint)?;
    let env_name = args.env.clone().unwrap_or(meta.env);
    let mut env = make_env(&env_name)?;
    let mut rng = derive(args.seed, Stream::Eval);
    let stats = evaluate(agent.as_ref(), env.as_mut(), args.episodes, &mut rng)?;
    println!(
        "{} on {} ({} episodes, trained {} steps): mean {:.3} std {:.3}",
        meta.algo, env_name, args.episodes, meta.step, stats.mean, stats.std
    );
    for (i, r) in stats.returns.iter().enumerate() {
        println!("  episode {i}: {r:.3}");
    }
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<(), Error> {
    let base = build_config(&args.flags)?;
    let seeds = parse_seed_list(&args.seeds)?;
    if args.parallel {
        return run_compare_parallel(&base, &seeds);
    }
    let artifacts = compare(&base, &seeds)?;
    for a in &artifacts {
        let last = a.rows.last();
        println!(
            "{:>8} seed {:<3} final eval {:>10.2}  -> {}",
            a.config.replay.as_str(),
            a.config.seed,
            last.map_or(f64::NAN, |r| r.eval_return_mean),
            a.metrics_path.display()
        );
    }
    Ok(())
}

/// One child process per matrix cell; cells share nothing, so this is safe.
fn run_compare_parallel(base: &RunConfig, seeds: &[u64]) -> Result<(), Error> {
    let exe = std::env::current_exe()
        .map_err(|e| Error::Io { path: PathBuf::from("<current_exe>"), source: e })?;
    let mut children = Vec::new();
    for strategy in ReplayStrategy::all() {
        for &seed in seeds {
            let mut cell = base.clone();
            cell.replay = strategy;
            cell.seed = seed;
            cell.out_dir = base.out_dir.join(format!(
                "{}_{}_seed{}",
                cell.algo.as_str(),
                strategy.as_str(),
                seed
            ));
            std::fs::create_dir_all(&cell.out_dir)
                .map_err(|e| Error::Io { path: cell.out_dir.clone(), source: e })?;
            let cfg_path = cell.out_dir.join("cell_config.txt");
            std::fs::write(&cfg_path, cell.render())
                .map_err(|e| Error::Io { path: cfg_path.clone(), source: e })?;
            let child = std::process::Command::new(&exe)
                .arg("train")
                .arg("--config")
                .arg(&cfg_path)
                .spawn()
                .map_err(|e| Error::Io { path: exe.clone(), source: e })?;
            children.push((cell.out_dir.clone(), child));
        }
    }
    let mut failed = false;
    for (dir, mut child) in children {
        let status = child
            .wait()
            .map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        if !status.success() {
            eprintln!("cell {} failed with {status}", dir.display());
            failed = true;
        }
    }
    if failed {
        return Err(Error::Divergence("one or more compare cells failed".into()));
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) => 2,
        Error::Divergence(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Compare(args) => run_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
