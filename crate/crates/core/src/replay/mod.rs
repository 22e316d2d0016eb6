//! Transition storage and the three batch-selection strategies.
//!
//! - Uniform: `ReplayBuffer::sample_uniform`, indices drawn independently
//!   with replacement.
//! - Prioritized: [`per::PerState`] over a sum tree.
//! - KL batch prioritization: [`klper_select`] draws several uniform
//!   candidate batches, scores each by the KL divergence of its fitted
//!   batch-generating policy to the isotropic target, and returns the
//!   lowest-scoring batch (ties broken by lowest candidate index).

pub mod per;
pub mod sum_tree;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::{fit_batch_policy, kl_to_isotropic, KlTarget};
use crate::numcore::{Matrix, Mlp};
use crate::rng::SeedRng;

pub use per::PerState;
pub use sum_tree::SumTree;

/// One experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions; oldest entries are overwritten
/// once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 || state_dim == 0 || action_dim == 0 {
            return Err(Error::Config(format!(
                "buffer dims/capacity must be positive, got m={state_dim} l={action_dim} cap={capacity}"
            )));
        }
        Ok(Self {
            state_dim,
            action_dim,
            capacity,
            storage: Vec::new(),
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.storage[idx]
    }

    /// Store a transition; returns the slot it was written to.
    pub fn push(&mut self, t: Transition) -> Result<usize> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::Shape(format!(
                "transition dims (s={}, a={}, s'={}) vs buffer (m={}, l={})",
                t.state.len(),
                t.action.len(),
                t.next_state.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        let finite = t.state.iter().chain(&t.next_state).chain(&t.action).all(|v| v.is_finite())
            && t.reward.is_finite();
        if !finite {
            return Err(Error::Domain("non-finite transition entries".into()));
        }
        let slot = self.cursor;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[slot] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(slot)
    }

    /// Materialize the transitions at `indices`.
    pub fn gather(&self, indices: &[usize]) -> CandidateBatch {
        CandidateBatch {
            indices: indices.to_vec(),
            transitions: indices.iter().map(|&i| self.storage[i].clone()).collect(),
            kappa: None,
        }
    }

    /// `batch_size` indices drawn uniformly with replacement.
    pub fn sample_uniform(&self, batch_size: usize, rng: &mut SeedRng) -> Result<CandidateBatch> {
        if self.len() < batch_size {
            return Err(Error::Underfull {
                need: batch_size,
                have: self.len(),
            });
        }
        let indices: Vec<usize> = (0..batch_size)
            .map(|_| rng.random_range(0..self.len()))
            .collect();
        Ok(self.gather(&indices))
    }

    /// Binary snapshot: header (m, l, capacity, size, cursor as u64 LE) then
    /// packed f64 transitions in slot order, `done` encoded as 0.0/1.0.
    /// Round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
            w.write_all(bytes).map_err(|e| Error::io(path, e))
        };
        put(&mut w, b"RBUFSNP1")?;
        for v in [
            self.state_dim as u64,
            self.action_dim as u64,
            self.capacity as u64,
            self.storage.len() as u64,
            self.cursor as u64,
        ] {
            put(&mut w, &v.to_le_bytes())?;
        }
        for t in &self.storage {
            for &v in t.state.iter().chain(&t.action) {
                put(&mut w, &v.to_le_bytes())?;
            }
            put(&mut w, &t.reward.to_le_bytes())?;
            for &v in &t.next_state {
                put(&mut w, &v.to_le_bytes())?;
            }
            put(&mut w, &(if t.done { 1.0f64 } else { 0.0f64 }).to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != b"RBUFSNP1" {
            return Err(Error::Parse(format!(
                "{} is not a replay snapshot (bad magic)",
                path.display()
            )));
        }
        let mut u64_buf = [0u8; 8];
        let mut next_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut u64_buf).map_err(|e| Error::io(path, e))?;
            Ok(u64::from_le_bytes(u64_buf))
        };
        let state_dim = next_u64(&mut r)? as usize;
        let action_dim = next_u64(&mut r)? as usize;
        let capacity = next_u64(&mut r)? as usize;
        let size = next_u64(&mut r)? as usize;
        let cursor = next_u64(&mut r)? as usize;
        if size > capacity || cursor >= capacity.max(1) {
            return Err(Error::Parse("inconsistent snapshot header".into()));
        }
        let mut buffer = ReplayBuffer::new(state_dim, action_dim, capacity)?;
        let next_f64 = |r: &mut BufReader<File>| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
            Ok(f64::from_le_bytes(b))
        };
        for _ in 0..size {
            let state: Vec<f64> = (0..state_dim)
                .map(|_| next_f64(&mut r))
                .collect::<Result<_>>()?;
            let action: Vec<f64> = (0..action_dim)
                .map(|_| next_f64(&mut r))
                .collect::<Result<_>>()?;
            let reward = next_f64(&mut r)?;
            let next_state: Vec<f64> = (0..state_dim)
                .map(|_| next_f64(&mut r))
                .collect::<Result<_>>()?;
            let done = next_f64(&mut r)? != 0.0;
            buffer.storage.push(Transition {
                state,
                action,
                reward,
                next_state,
                done,
            });
        }
        buffer.cursor = cursor;
        Ok(buffer)
    }
}

/// A sampled mini-batch: buffer indices, materialized transitions, and the
/// KL score once the batch has been scored.
#[derive(Debug, Clone)]
pub struct CandidateBatch {
    indices: Vec<usize>,
    transitions: Vec<Transition>,
    kappa: Option<f64>,
}

impl CandidateBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub(crate) fn set_kappa(&mut self, kappa: f64) {
        self.kappa = Some(kappa);
    }

    pub fn states_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.transitions.iter().map(|t| t.state.clone()).collect();
        Matrix::from_rows(&rows).expect("transitions share dims by construction")
    }

    pub fn actions_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.transitions.iter().map(|t| t.action.clone()).collect();
        Matrix::from_rows(&rows).expect("transitions share dims by construction")
    }

    pub fn next_states_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self
            .transitions
            .iter()
            .map(|t| t.next_state.clone())
            .collect();
        Matrix::from_rows(&rows).expect("transitions share dims by construction")
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn dones(&self) -> Vec<bool> {
        self.transitions.iter().map(|t| t.done).collect()
    }
}

/// One-step TD error magnitude:
/// `|r + gamma * (1 - done) * Q_target(s', actor_target(s')) - Q(s, a)|`.
///
/// `action_bound` scales the target actor's tanh output to raw action units.
pub fn td_error(
    transition: &Transition,
    critic: &Mlp,
    actor_target: &Mlp,
    critic_target: &Mlp,
    gamma: f64,
    action_bound: &[f64],
) -> Result<f64> {
    let s = Matrix::from_rows(std::slice::from_ref(&transition.state))?;
    let a = Matrix::from_rows(std::slice::from_ref(&transition.action))?;
    let s_next = Matrix::from_rows(std::slice::from_ref(&transition.next_state))?;

    let q = critic.forward(&s.hcat(&a)?)?[(0, 0)];
    let bootstrap = if transition.done {
        0.0
    } else {
        let mut a_next = actor_target.forward(&s_next)?;
        scale_columns(&mut a_next, action_bound);
        critic_target.forward(&s_next.hcat(&a_next)?)?[(0, 0)]
    };
    Ok((transition.reward + gamma * bootstrap - q).abs())
}

/// Expected number of updates until a transition with sampling probability
/// `prob` appears again, at batch size `batch_size`: `1 / (prob * b)`.
/// Zero probability yields infinity.
pub fn expected_sampling_period(prob: f64, batch_size: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&prob) || prob.is_nan() {
        return Err(Error::Domain(format!(
            "sampling probability must be in [0, 1], got {prob}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::Domain("batch size must be >= 1".into()));
    }
    if prob == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (prob * batch_size as f64))
}

/// Scale each column j of `m` by `bound[j]` (actor tanh output -> raw units).
pub(crate) fn scale_columns(m: &mut Matrix, bound: &[f64]) {
    debug_assert_eq!(m.cols(), bound.len());
    for r in 0..m.rows() {
        for (v, &b) in m.row_mut(r).iter_mut().zip(bound) {
            *v *= b;
        }
    }
}

/// Action deltas of a batch under the current actor: row i is
/// `actor(s_i) * bound - a_i`, the difference between what the present policy
/// would do and what was actually stored.
pub fn compute_action_deltas(
    batch: &CandidateBatch,
    actor: &Mlp,
    action_bound: &[f64],
) -> Result<Matrix> {
    let states = batch.states_matrix();
    let mut deltas = actor.forward(&states)?;
    scale_columns(&mut deltas, action_bound);
    let actions = batch.actions_matrix();
    if !deltas.same_shape(&actions) {
        return Err(Error::Shape(format!(
            "actor produced {}x{}, stored actions are {}x{}",
            deltas.rows(),
            deltas.cols(),
            actions.rows(),
            actions.cols()
        )));
    }
    for (d, a) in deltas.data_mut().iter_mut().zip(actions.data()) {
        *d -= a;
    }
    Ok(deltas)
}

/// Outcome of one KLPER selection: the winning batch plus everything needed
/// to audit or log the decision.
#[derive(Debug, Clone)]
pub struct KlperSelection {
    /// The minimum-score batch, with its score filled in.
    pub chosen: CandidateBatch,
    /// Position of the winner among the candidates.
    pub chosen_index: usize,
    /// KL score of every candidate, in draw order.
    pub kappas: Vec<f64>,
    /// Buffer indices of every candidate, in draw order.
    pub candidate_indices: Vec<Vec<usize>>,
}

impl KlperSelection {
    pub fn kappa_mean(&self) -> f64 {
        self.kappas.iter().sum::<f64>() / self.kappas.len() as f64
    }
}

/// Draw `n_candidates` uniform batches, score each by the KL divergence of
/// its fitted batch policy to `target`, and return the argmin. Ties break
/// toward the lowest candidate index so runs are reproducible.
pub fn klper_select(
    buffer: &ReplayBuffer,
    n_candidates: usize,
    batch_size: usize,
    actor: &Mlp,
    action_bound: &[f64],
    target: &KlTarget,
    rng: &mut SeedRng,
) -> Result<KlperSelection> {
    if n_candidates == 0 {
        return Err(Error::Config("need at least one candidate batch".into()));
    }
    let mut candidates = Vec::with_capacity(n_candidates);
    for _ in 0..n_candidates {
        candidates.push(buffer.sample_uniform(batch_size, rng)?);
    }
    let mut kappas = Vec::with_capacity(n_candidates);
    for batch in &candidates {
        let deltas = compute_action_deltas(batch, actor, action_bound)?;
        let policy = fit_batch_policy(&deltas)?;
        kappas.push(kl_to_isotropic(&policy, target)?);
    }
    let mut chosen_index = 0;
    for (i, &k) in kappas.iter().enumerate().skip(1) {
        if k < kappas[chosen_index] {
            chosen_index = i;
        }
    }
    let candidate_indices: Vec<Vec<usize>> =
        candidates.iter().map(|c| c.indices.clone()).collect();
    let mut chosen = candidates.swap_remove(chosen_index);
    chosen.set_kappa(kappas[chosen_index]);
    Ok(KlperSelection {
        chosen,
        chosen_index,
        kappas,
        candidate_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::OutputActivation;
    use crate::rng::{derive, Stream};

    fn transition(x: f64) -> Transition {
        Transition {
            state: vec![x, x + 0.5],
            action: vec![x / 10.0],
            reward: x,
            next_state: vec![x + 1.0, x + 1.5],
            done: false,
        }
    }

    #[test]
    fn push_into_empty_buffer() {
        let mut buffer = ReplayBuffer::new(2, 1, 4).unwrap();
        let slot = buffer.push(transition(1.0)).unwrap();
        assert_eq!(slot, 0);
        assert_eq!(buffer.len(), 1);
        assert_eq!(buffer.get(0).reward, 1.0);
    }

    #[test]
    fn ring_overwrites_oldest_first() {
        let mut buffer = ReplayBuffer::new(2, 1, 2).unwrap();
        buffer.push(transition(1.0)).unwrap();
        buffer.push(transition(2.0)).unwrap();
        let slot = buffer.push(transition(3.0)).unwrap();
        assert_eq!(slot, 0);
        assert_eq!(buffer.len(), 2);
        let rewards: Vec<f64> = (0..2).map(|i| buffer.get(i).reward).collect();
        assert_eq!(rewards, vec![3.0, 2.0]);
        assert_eq!(buffer.cursor(), 1);
    }

    #[test]
    fn push_rejects_wrong_dims_and_non_finite() {
        let mut buffer = ReplayBuffer::new(2, 1, 4).unwrap();
        let mut bad = transition(1.0);
        bad.state = vec![1.0];
        assert!(matches!(buffer.push(bad), Err(Error::Shape(_))));
        let mut nan = transition(1.0);
        nan.reward = f64::NAN;
        assert!(matches!(buffer.push(nan), Err(Error::Domain(_))));
    }

    #[test]
    fn uniform_sampling_needs_enough_transitions() {
        let mut buffer = ReplayBuffer::new(2, 1, 4).unwrap();
        buffer.push(transition(1.0)).unwrap();
        let mut rng = derive(0, Stream::Replay);
        assert!(matches!(
            buffer.sample_uniform(3, &mut rng),
            Err(Error::Underfull { need: 3, have: 1 })
        ));
    }

    #[test]
    fn uniform_sampling_is_reproducible_under_equal_rng_state() {
        let mut buffer = ReplayBuffer::new(2, 1, 2000).unwrap();
        for i in 0..1000 {
            buffer.push(transition(i as f64)).unwrap();
        }
        let mut rng_a = derive(3, Stream::Replay);
        let mut rng_b = derive(3, Stream::Replay);
        let a = buffer.sample_uniform(64, &mut rng_a).unwrap();
        let b = buffer.sample_uniform(64, &mut rng_b).unwrap();
        assert_eq!(a.indices(), b.indices());
    }

    #[test]
    fn uniform_sampling_frequencies_are_flat() {
        // 1e6 index draws over 4 slots: each frequency within 1% of 0.25.
        let mut buffer = ReplayBuffer::new(2, 1, 4).unwrap();
        for i in 0..4 {
            buffer.push(transition(i as f64)).unwrap();
        }
        let mut rng = derive(4, Stream::Replay);
        let mut counts = [0u64; 4];
        for _ in 0..250_000 {
            let batch = buffer.sample_uniform(4, &mut rng).unwrap();
            for &i in batch.indices() {
                counts[i] += 1;
            }
        }
        for &c in &counts {
            let freq = c as f64 / 1_000_000.0;
            assert!((freq - 0.25).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buffer.bin");
        let mut buffer = ReplayBuffer::new(2, 1, 3).unwrap();
        for i in 0..5 {
            let mut t = transition(i as f64 * 0.37);
            t.done = i % 2 == 0;
            buffer.push(t).unwrap();
        }
        buffer.save(&path).unwrap();
        let loaded = ReplayBuffer::load(&path).unwrap();
        assert_eq!(loaded.len(), buffer.len());
        assert_eq!(loaded.capacity(), buffer.capacity());
        assert_eq!(loaded.cursor(), buffer.cursor());
        for i in 0..buffer.len() {
            assert_eq!(loaded.get(i), buffer.get(i));
        }
    }

    #[test]
    fn td_error_worked_case_is_zero() {
        // r = 1, gamma = 0.99, Q' = 2, Q = 2.98 -> delta = 0.
        let mut critic = Mlp::zeroed(&[3, 1], OutputActivation::Identity).unwrap();
        critic.param_tensors_mut()[1][(0, 0)] = 2.98;
        let mut critic_target = Mlp::zeroed(&[3, 1], OutputActivation::Identity).unwrap();
        critic_target.param_tensors_mut()[1][(0, 0)] = 2.0;
        let actor_target = Mlp::zeroed(&[2, 1], OutputActivation::Tanh).unwrap();
        let t = Transition {
            state: vec![0.1, 0.2],
            action: vec![0.3],
            reward: 1.0,
            next_state: vec![0.4, 0.5],
            done: false,
        };
        let delta = td_error(&t, &critic, &actor_target, &critic_target, 0.99, &[1.0]).unwrap();
        assert!(delta.abs() < 1e-12, "delta = {delta}");
    }

    #[test]
    fn td_error_drops_bootstrap_on_done() {
        let mut critic = Mlp::zeroed(&[3, 1], OutputActivation::Identity).unwrap();
        critic.param_tensors_mut()[1][(0, 0)] = 1.0;
        let mut critic_target = Mlp::zeroed(&[3, 1], OutputActivation::Identity).unwrap();
        critic_target.param_tensors_mut()[1][(0, 0)] = 57.0;
        let actor_target = Mlp::zeroed(&[2, 1], OutputActivation::Tanh).unwrap();
        let t = Transition {
            state: vec![0.0, 0.0],
            action: vec![0.0],
            reward: 1.0,
            next_state: vec![0.0, 0.0],
            done: true,
        };
        let delta = td_error(&t, &critic, &actor_target, &critic_target, 0.99, &[1.0]).unwrap();
        assert_eq!(delta, 0.0);
    }

    #[test]
    fn td_error_at_gamma_zero_ignores_targets() {
        let mut critic = Mlp::zeroed(&[3, 1], OutputActivation::Identity).unwrap();
        critic.param_tensors_mut()[1][(0, 0)] = 0.25;
        let mut critic_target = Mlp::zeroed(&[3, 1], OutputActivation::Identity).unwrap();
        critic_target.param_tensors_mut()[1][(0, 0)] = 9.0;
        let actor_target = Mlp::zeroed(&[2, 1], OutputActivation::Tanh).unwrap();
        let t = Transition {
            state: vec![0.0, 0.0],
            action: vec![0.0],
            reward: 1.0,
            next_state: vec![0.0, 0.0],
            done: false,
        };
        let delta = td_error(&t, &critic, &actor_target, &critic_target, 0.0, &[1.0]).unwrap();
        assert!((delta - 0.75).abs() < 1e-15);
    }

    #[test]
    fn expected_sampling_period_worked_cases() {
        assert_eq!(expected_sampling_period(1.0, 1).unwrap(), 1.0);
        assert_eq!(expected_sampling_period(0.001, 64).unwrap(), 15.625);
        assert_eq!(expected_sampling_period(0.5, 2).unwrap(), 1.0);
        assert_eq!(expected_sampling_period(0.0, 64).unwrap(), f64::INFINITY);
        assert!(matches!(
            expected_sampling_period(1.5, 4),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            expected_sampling_period(0.5, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn action_deltas_zero_actor_gives_negated_actions() {
        let mut buffer = ReplayBuffer::new(2, 1, 8).unwrap();
        for i in 0..4 {
            buffer.push(transition(i as f64)).unwrap();
        }
        let batch = buffer.gather(&[0, 1, 2, 3]);
        let actor = Mlp::zeroed(&[2, 1], OutputActivation::Tanh).unwrap();
        let deltas = compute_action_deltas(&batch, &actor, &[2.0]).unwrap();
        for (r, t) in batch.transitions().iter().enumerate() {
            assert_eq!(deltas[(r, 0)], -t.action[0]);
        }
    }

    #[test]
    fn action_deltas_match_row_by_row_oracle() {
        let mut rng = derive(12, Stream::Init);
        let actor = Mlp::new(&[2, 8, 1], OutputActivation::Tanh, &mut rng).unwrap();
        let bound = [2.0];
        let mut buffer = ReplayBuffer::new(2, 1, 8).unwrap();
        for i in 0..6 {
            buffer.push(transition(i as f64 * 0.3)).unwrap();
        }
        let batch = buffer.gather(&[1, 3, 5]);
        let deltas = compute_action_deltas(&batch, &actor, &bound).unwrap();
        for (r, t) in batch.transitions().iter().enumerate() {
            let s = Matrix::from_rows(&[t.state.clone()]).unwrap();
            let a_hat = actor.forward(&s).unwrap()[(0, 0)] * bound[0];
            assert!((deltas[(r, 0)] - (a_hat - t.action[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn klper_single_candidate_is_returned_unconditionally() {
        let mut buffer = ReplayBuffer::new(2, 1, 16).unwrap();
        for i in 0..8 {
            buffer.push(transition(i as f64 * 0.2)).unwrap();
        }
        let actor = Mlp::zeroed(&[2, 1], OutputActivation::Tanh).unwrap();
        let target = KlTarget::new(0.1, 1).unwrap();
        let mut rng_a = derive(20, Stream::Replay);
        let mut rng_b = derive(20, Stream::Replay);
        let selection =
            klper_select(&buffer, 1, 4, &actor, &[1.0], &target, &mut rng_a).unwrap();
        let direct = buffer.sample_uniform(4, &mut rng_b).unwrap();
        assert_eq!(selection.chosen_index, 0);
        assert_eq!(selection.chosen.indices(), direct.indices());
        assert_eq!(selection.kappas.len(), 1);
    }

    #[test]
    fn klper_returns_exact_argmin_with_low_index_ties() {
        let mut buffer = ReplayBuffer::new(2, 1, 64).unwrap();
        let mut rng = derive(21, Stream::Replay);
        for _ in 0..40 {
            buffer
                .push(Transition {
                    state: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    action: vec![rng.random_range(-1.0..1.0)],
                    reward: 0.0,
                    next_state: vec![0.0, 0.0],
                    done: false,
                })
                .unwrap();
        }
        let mut init_rng = derive(22, Stream::Init);
        let actor = Mlp::new(&[2, 8, 1], OutputActivation::Tanh, &mut init_rng).unwrap();
        let target = KlTarget::new(0.1, 1).unwrap();
        for trial in 0..50 {
            let mut sel_rng = derive(100 + trial, Stream::Replay);
            let selection =
                klper_select(&buffer, 5, 6, &actor, &[1.0], &target, &mut sel_rng).unwrap();
            // Recompute every candidate's score from its index set.
            let recomputed: Vec<f64> = selection
                .candidate_indices
                .iter()
                .map(|idx| {
                    let batch = buffer.gather(idx);
                    let deltas = compute_action_deltas(&batch, &actor, &[1.0]).unwrap();
                    kl_to_isotropic(&fit_batch_policy(&deltas).unwrap(), &target).unwrap()
                })
                .collect();
            let mut argmin = 0;
            for (i, &k) in recomputed.iter().enumerate().skip(1) {
                if k < recomputed[argmin] {
                    argmin = i;
                }
            }
            assert_eq!(selection.chosen_index, argmin);
            assert_eq!(selection.chosen.kappa(), Some(recomputed[argmin]));
            for &k in &recomputed {
                assert!(selection.chosen.kappa().unwrap() <= k);
            }
        }
    }

    #[test]
    fn klper_prefers_the_on_policy_region() {
        // First half of the buffer: actions = actor(s) + noise matched to the
        // target variance. Second half: a distant policy with a shifted mean.
        // Over many trials the chosen batch should overlap the on-policy
        // region more than the average candidate does.
        use rand_distr::{Distribution, Normal};

        let mut init_rng = derive(30, Stream::Init);
        let actor = Mlp::new(&[2, 8, 1], OutputActivation::Tanh, &mut init_rng).unwrap();
        let bound = [1.0];
        let sigma: f64 = 0.1;
        let noise = Normal::new(0.0, sigma.sqrt()).unwrap();

        let mut fill_rng = derive(31, Stream::Env);
        let mut buffer = ReplayBuffer::new(2, 1, 512).unwrap();
        let on_policy = 256usize;
        for i in 0..512 {
            let state = vec![
                fill_rng.random_range(-1.0..1.0),
                fill_rng.random_range(-1.0..1.0),
            ];
            let s = Matrix::from_rows(&[state.clone()]).unwrap();
            let a_now = actor.forward(&s).unwrap()[(0, 0)];
            let action = if i < on_policy {
                a_now + noise.sample(&mut fill_rng)
            } else {
                a_now + 1.5 + noise.sample(&mut fill_rng)
            };
            buffer
                .push(Transition {
                    state,
                    action: vec![action],
                    reward: 0.0,
                    next_state: vec![0.0, 0.0],
                    done: false,
                })
                .unwrap();
        }

        let target = KlTarget::new(sigma, 1).unwrap();
        let overlap = |indices: &[usize]| {
            indices.iter().filter(|&&i| i < on_policy).count() as f64 / indices.len() as f64
        };
        let mut chosen_total = 0.0;
        let mut candidate_total = 0.0;
        for trial in 0..100 {
            let mut rng = derive(1000 + trial, Stream::Replay);
            let selection =
                klper_select(&buffer, 4, 16, &actor, &bound, &target, &mut rng).unwrap();
            chosen_total += overlap(selection.chosen.indices());
            candidate_total += selection
                .candidate_indices
                .iter()
                .map(|c| overlap(c))
                .sum::<f64>()
                / selection.candidate_indices.len() as f64;
        }
        let chosen_mean = chosen_total / 100.0;
        let candidate_mean = candidate_total / 100.0;
        assert!(
            chosen_mean > candidate_mean,
            "chosen {chosen_mean} vs candidates {candidate_mean}"
        );
    }

    #[test]
    fn klper_rejects_zero_candidates_and_underfull_buffers() {
        let mut buffer = ReplayBuffer::new(2, 1, 8).unwrap();
        buffer.push(transition(0.0)).unwrap();
        let actor = Mlp::zeroed(&[2, 1], OutputActivation::Tanh).unwrap();
        let target = KlTarget::new(0.1, 1).unwrap();
        let mut rng = derive(40, Stream::Replay);
        assert!(matches!(
            klper_select(&buffer, 0, 2, &actor, &[1.0], &target, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            klper_select(&buffer, 2, 2, &actor, &[1.0], &target, &mut rng),
            Err(Error::Underfull { .. })
        ));
    }
}
