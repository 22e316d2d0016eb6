//! Desk-scale continuous-control tasks.
//!
//! Two deterministic environments with fully documented dynamics, so runs are
//! bit-comparable across implementations:
//!
//! **`pendulum`** — torque-limited swing-up. Internal state (theta,
//! theta_dot) with theta = 0 upright; observation is `[cos theta, sin theta,
//! theta_dot]`. Dynamics (semi-implicit Euler, dt = 0.05, g = 10, unit mass
//! and length, torque clipped to |u| <= 2, velocity clipped to |theta_dot|
//! <= 8):
//!
//! ```text
//! theta_dot' = clip(theta_dot + (3g/2 sin(theta) + 3u) dt, -8, 8)
//! theta'     = wrap(theta + theta_dot' dt)        (wrap to (-pi, pi])
//! reward     = -(wrap(theta')^2 + 0.1 theta_dot'^2 + 0.001 u^2)
//! ```
//!
//! Episodes run a fixed 200 steps. Reset draws theta uniform over the circle
//! (midpoint of the unit draw is theta = pi, hanging down) and theta_dot
//! uniform in [-1, 1].
//!
//! **`reacher2d`** — force-limited double-integrator point mass chasing a
//! target. Observation `[px, py, vx, vy, tx - px, ty - py]`; force clipped to
//! |u_i| <= 1, velocity to |v_i| <= 2, position to |p_i| <= 2; dt = 0.05;
//! reward = -distance(pos, target); done when the distance drops below 0.05
//! or after 150 steps. Reset draws the start position uniform in
//! [-0.1, 0.1]^2 (midpoint: the origin) and the target uniform in polar
//! coordinates, radius in [0.5, 1.0] and angle over the circle (midpoint:
//! (-0.75, 0)).

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedRng;

/// Static description of an environment's interface.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    /// Per-dimension positive action bound; valid actions are [-b_i, b_i].
    pub action_bound: Vec<f64>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    fn new(
        state_dim: usize,
        action_dim: usize,
        action_bound: Vec<f64>,
        max_episode_steps: usize,
    ) -> Self {
        assert!(state_dim >= 1 && action_dim >= 1);
        assert_eq!(action_bound.len(), action_dim);
        assert!(action_bound.iter().all(|&b| b > 0.0));
        Self {
            state_dim,
            action_dim,
            action_bound,
            max_episode_steps,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub episode_step: usize,
}

pub trait Environment {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &EnvSpec;
    /// Start a new episode and return the initial observation.
    fn reset(&mut self, rng: &mut SeedRng) -> Vec<f64>;
    /// Advance one step. Out-of-bound actions are clipped (and counted);
    /// non-finite actions are a domain error; stepping a finished episode is
    /// a state error.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    /// How many action components have been clipped so far.
    fn clipped_actions(&self) -> u64;
}

/// Instantiate an environment by its CLI name.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::new())),
        "reacher2d" => Ok(Box::new(Reacher2d::new())),
        other => Err(Error::Config(format!(
            "unknown environment '{other}' (expected 'pendulum' or 'reacher2d')"
        ))),
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::Shape(format!(
            "action has {} dims, environment expects {dim}",
            action.len()
        )));
    }
    if action.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite action".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pendulum
// ---------------------------------------------------------------------------

const PENDULUM_DT: f64 = 0.05;
const PENDULUM_G: f64 = 10.0;
const PENDULUM_MAX_TORQUE: f64 = 2.0;
const PENDULUM_MAX_SPEED: f64 = 8.0;
const PENDULUM_HORIZON: usize = 200;

#[derive(Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    episode_step: usize,
    done: bool,
    clipped: u64,
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::new(3, 1, vec![PENDULUM_MAX_TORQUE], PENDULUM_HORIZON),
            theta: PI,
            theta_dot: 0.0,
            episode_step: 0,
            done: false,
            clipped: 0,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Deterministic reset from two unit uniforms: theta = wrap(2 pi u1),
    /// theta_dot = -1 + 2 u2. The midpoint draw (0.5, 0.5) is the hanging
    /// rest state (pi, 0).
    pub fn reset_from_uniforms(&mut self, u1: f64, u2: f64) -> Vec<f64> {
        self.theta = wrap_angle(2.0 * PI * u1);
        self.theta_dot = -1.0 + 2.0 * u2;
        self.episode_step = 0;
        self.done = false;
        self.observation()
    }

    /// Internal angle state, for tests and debugging.
    pub fn angle_state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeedRng) -> Vec<f64> {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        self.reset_from_uniforms(u1, u2)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, 1)?;
        if self.done {
            return Err(Error::State("episode already finished; reset first".into()));
        }
        let raw = action[0];
        let u = raw.clamp(-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE);
        if u != raw {
            self.clipped += 1;
        }

        let accel = 1.5 * PENDULUM_G * self.theta.sin() + 3.0 * u;
        self.theta_dot =
            (self.theta_dot + accel * PENDULUM_DT).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
        self.theta = wrap_angle(self.theta + self.theta_dot * PENDULUM_DT);

        let reward = -(self.theta * self.theta
            + 0.1 * self.theta_dot * self.theta_dot
            + 0.001 * u * u);
        self.episode_step += 1;
        self.done = self.episode_step >= PENDULUM_HORIZON;
        Ok(StepResult {
            next_state: self.observation(),
            reward,
            done: self.done,
            episode_step: self.episode_step,
        })
    }

    fn clipped_actions(&self) -> u64 {
        self.clipped
    }
}

// ---------------------------------------------------------------------------
// Reacher
// ---------------------------------------------------------------------------

const REACHER_DT: f64 = 0.05;
const REACHER_MAX_FORCE: f64 = 1.0;
const REACHER_MAX_SPEED: f64 = 2.0;
const REACHER_MAX_POS: f64 = 2.0;
const REACHER_GOAL_RADIUS: f64 = 0.05;
const REACHER_HORIZON: usize = 150;

#[derive(Debug)]
pub struct Reacher2d {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    target: [f64; 2],
    episode_step: usize,
    done: bool,
    clipped: u64,
}

impl Reacher2d {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::new(6, 2, vec![REACHER_MAX_FORCE; 2], REACHER_HORIZON),
            pos: [0.0; 2],
            vel: [0.0; 2],
            target: [-0.75, 0.0],
            episode_step: 0,
            done: false,
            clipped: 0,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.target[0] - self.pos[0],
            self.target[1] - self.pos[1],
        ]
    }

    fn distance(&self) -> f64 {
        let dx = self.pos[0] - self.target[0];
        let dy = self.pos[1] - self.target[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Deterministic reset from four unit uniforms: start position uniform
    /// in [-0.1, 0.1]^2 (u1, u2), target at radius 0.5 + 0.5 u3 and angle
    /// 2 pi u4. The midpoint draw places the agent at the origin and the
    /// target at (-0.75, 0).
    pub fn reset_from_uniforms(&mut self, u1: f64, u2: f64, u3: f64, u4: f64) -> Vec<f64> {
        self.pos = [-0.1 + 0.2 * u1, -0.1 + 0.2 * u2];
        self.vel = [0.0, 0.0];
        let radius = 0.5 + 0.5 * u3;
        let angle = 2.0 * PI * u4;
        self.target = [radius * angle.cos(), radius * angle.sin()];
        self.episode_step = 0;
        self.done = false;
        self.observation()
    }

    /// Place the agent and target exactly; for tests.
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2], target: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.target = target;
        self.episode_step = 0;
        self.done = false;
    }
}

impl Default for Reacher2d {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Reacher2d {
    fn name(&self) -> &'static str {
        "reacher2d"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeedRng) -> Vec<f64> {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let u4: f64 = rng.random();
        self.reset_from_uniforms(u1, u2, u3, u4)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, 2)?;
        if self.done {
            return Err(Error::State("episode already finished; reset first".into()));
        }
        for i in 0..2 {
            let raw = action[i];
            let u = raw.clamp(-REACHER_MAX_FORCE, REACHER_MAX_FORCE);
            if u != raw {
                self.clipped += 1;
            }
            self.vel[i] =
                (self.vel[i] + u * REACHER_DT).clamp(-REACHER_MAX_SPEED, REACHER_MAX_SPEED);
            self.pos[i] =
                (self.pos[i] + self.vel[i] * REACHER_DT).clamp(-REACHER_MAX_POS, REACHER_MAX_POS);
        }
        let dist = self.distance();
        let reward = 0.0 - dist;
        self.episode_step += 1;
        self.done = dist < REACHER_GOAL_RADIUS || self.episode_step >= REACHER_HORIZON;
        Ok(StepResult {
            next_state: self.observation(),
            reward,
            done: self.done,
            episode_step: self.episode_step,
        })
    }

    fn clipped_actions(&self) -> u64 {
        self.clipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    #[test]
    fn pendulum_midpoint_reset_hangs_down() {
        let mut env = Pendulum::new();
        env.reset_from_uniforms(0.5, 0.5);
        let (theta, theta_dot) = env.angle_state();
        assert_eq!(theta, PI);
        assert_eq!(theta_dot, 0.0);
    }

    #[test]
    fn pendulum_upright_equilibrium_is_fixed_point() {
        let mut env = Pendulum::new();
        env.reset_from_uniforms(0.0, 0.5); // theta = 0, theta_dot = 0
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(env.angle_state(), (0.0, 0.0));
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn pendulum_one_step_matches_hand_integration() {
        let mut env = Pendulum::new();
        env.reset_from_uniforms(0.35, 0.8); // arbitrary non-degenerate state
        let (theta0, theta_dot0) = env.angle_state();
        let u = 1.3f64;
        let r = env.step(&[u]).unwrap();

        // Straight-line recomputation of the documented update.
        let accel = 1.5 * 10.0 * theta0.sin() + 3.0 * u;
        let td = (theta_dot0 + accel * 0.05).clamp(-8.0, 8.0);
        let th = wrap_angle(theta0 + td * 0.05);
        let expect_reward = -(th * th + 0.1 * td * td + 0.001 * u * u);

        let (theta1, theta_dot1) = env.angle_state();
        assert_eq!(theta1, th);
        assert_eq!(theta_dot1, td);
        assert_eq!(r.reward, expect_reward);
    }

    #[test]
    fn pendulum_hanging_with_zero_torque_stays_near_rest() {
        let mut env = Pendulum::new();
        env.reset_from_uniforms(0.5, 0.5); // exactly (pi, 0)
        let r = env.step(&[0.0]).unwrap();
        // sin(pi) is ~1e-16 in floats, so the state barely moves.
        let (theta, theta_dot) = env.angle_state();
        assert!((theta - PI).abs() < 1e-12);
        assert!(theta_dot.abs() < 1e-12);
        assert!((r.reward + PI * PI).abs() < 1e-9);
    }

    #[test]
    fn pendulum_reward_stays_in_documented_range() {
        let mut env = Pendulum::new();
        let mut rng = derive(1, Stream::Env);
        let lower = -(PI * PI + 0.1 * 64.0 + 0.001 * 4.0);
        env.reset(&mut rng);
        for _ in 0..PENDULUM_HORIZON {
            let a = rng.random_range(-3.0..3.0);
            let r = env.step(&[a]).unwrap();
            assert!(r.reward <= 0.0 && r.reward >= lower, "reward {}", r.reward);
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn pendulum_episode_ends_exactly_at_horizon() {
        let mut env = Pendulum::new();
        let mut rng = derive(2, Stream::Env);
        env.reset(&mut rng);
        for step in 1..=PENDULUM_HORIZON {
            let r = env.step(&[0.0]).unwrap();
            assert_eq!(r.done, step == PENDULUM_HORIZON);
            assert_eq!(r.episode_step, step);
        }
        assert!(matches!(env.step(&[0.0]), Err(Error::State(_))));
    }

    #[test]
    fn pendulum_step_is_pure_in_state_and_action() {
        let mut a = Pendulum::new();
        let mut b = Pendulum::new();
        a.reset_from_uniforms(0.3, 0.7);
        b.reset_from_uniforms(0.3, 0.7);
        let ra = a.step(&[0.5]).unwrap();
        let rb = b.step(&[0.5]).unwrap();
        assert_eq!(ra.next_state, rb.next_state);
        assert_eq!(ra.reward.to_bits(), rb.reward.to_bits());
    }

    #[test]
    fn equal_rng_states_give_equal_resets() {
        let mut env_a = Pendulum::new();
        let mut env_b = Pendulum::new();
        let mut rng_a = derive(9, Stream::Env);
        let mut rng_b = derive(9, Stream::Env);
        assert_eq!(env_a.reset(&mut rng_a), env_b.reset(&mut rng_b));

        let mut re_a = Reacher2d::new();
        let mut re_b = Reacher2d::new();
        let mut rng_a = derive(10, Stream::Env);
        let mut rng_b = derive(10, Stream::Env);
        assert_eq!(re_a.reset(&mut rng_a), re_b.reset(&mut rng_b));
    }

    #[test]
    fn rejects_non_finite_action() {
        let mut env = Pendulum::new();
        env.reset_from_uniforms(0.5, 0.5);
        assert!(matches!(env.step(&[f64::NAN]), Err(Error::Domain(_))));
        let mut env = Reacher2d::new();
        env.reset_from_uniforms(0.5, 0.5, 0.5, 0.5);
        assert!(matches!(
            env.step(&[0.0, f64::INFINITY]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn out_of_bound_torque_is_clipped_and_counted() {
        let mut env = Pendulum::new();
        env.reset_from_uniforms(0.5, 0.5);
        env.step(&[100.0]).unwrap();
        assert_eq!(env.clipped_actions(), 1);
        // Same next state as applying the bound directly.
        let mut env2 = Pendulum::new();
        env2.reset_from_uniforms(0.5, 0.5);
        env2.step(&[2.0]).unwrap();
        assert_eq!(env.angle_state(), env2.angle_state());
    }

    #[test]
    fn reacher_midpoint_reset_matches_documented_default() {
        let mut env = Reacher2d::new();
        let obs = env.reset_from_uniforms(0.5, 0.5, 0.5, 0.5);
        assert_eq!(&obs[0..2], &[0.0, 0.0]);
        assert!((env.target[0] + 0.75).abs() < 1e-12);
        assert!(env.target[1].abs() < 1e-12);
    }

    #[test]
    fn reacher_at_goal_is_done_with_zero_reward() {
        let mut env = Reacher2d::new();
        env.set_state([0.3, -0.2], [0.0, 0.0], [0.3, -0.2]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.done);
    }

    #[test]
    fn reacher_reward_is_negative_distance() {
        let mut env = Reacher2d::new();
        env.set_state([0.0, 0.0], [0.0, 0.0], [1.0, 0.0]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.reward, -1.0);
        assert!(!r.done);
    }

    #[test]
    fn reacher_velocity_and_position_stay_bounded() {
        let mut env = Reacher2d::new();
        env.set_state([0.0, 0.0], [0.0, 0.0], [2.0, 2.0]);
        for _ in 0..REACHER_HORIZON {
            let r = env.step(&[1.0, 1.0]).unwrap();
            assert!(env.vel.iter().all(|v| v.abs() <= REACHER_MAX_SPEED));
            assert!(env.pos.iter().all(|p| p.abs() <= REACHER_MAX_POS));
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn make_env_knows_both_names_and_rejects_others() {
        assert_eq!(make_env("pendulum").unwrap().name(), "pendulum");
        assert_eq!(make_env("reacher2d").unwrap().name(), "reacher2d");
        assert!(matches!(make_env("mujoco"), Err(Error::Config(_))));
    }

    #[test]
    fn wrap_angle_maps_to_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(2.0 * PI)).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        for i in -20..20 {
            let x = i as f64 * 0.7;
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI, "wrap({x}) = {w}");
        }
    }
}
