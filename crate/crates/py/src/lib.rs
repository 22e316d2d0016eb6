//! Python bindings: the Gaussian KL scoring surface, the two environments,
//! the replay buffer, and a driver for full training runs.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use klper::envs::Environment;
use klper::error::Error;
use klper::gauss;
use klper::harness::{self, RunConfig};
use klper::numcore::Matrix;
use klper::replay;
use klper::rng::{derive, SeedRng, Stream};

fn to_py_err(err: Error) -> PyErr {
    match &err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::Divergence(_) => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py_err)
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn policy_from_py(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<gauss::BatchPolicy> {
    gauss::BatchPolicy::new(mean, matrix_from_rows(cov)?).map_err(to_py_err)
}

/// Column means and regularized sample covariance of a set of action deltas.
#[pyfunction]
fn fit_batch_policy(deltas: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let policy = gauss::fit_batch_policy(&matrix_from_rows(deltas)?).map_err(to_py_err)?;
    Ok((policy.mean().to_vec(), matrix_to_rows(policy.cov())))
}

/// Closed-form KL divergence from N(mean, cov) to N(0, sigma * I).
#[pyfunction]
fn kl_to_isotropic(mean: Vec<f64>, cov: Vec<Vec<f64>>, sigma: f64) -> PyResult<f64> {
    let policy = policy_from_py(mean, cov)?;
    let target = gauss::KlTarget::new(sigma, policy.dim()).map_err(to_py_err)?;
    gauss::kl_to_isotropic(&policy, &target).map_err(to_py_err)
}

/// Monte-Carlo estimate of the same divergence: (estimate, standard_error).
#[pyfunction]
fn kl_monte_carlo(
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    sigma: f64,
    n: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let policy = policy_from_py(mean, cov)?;
    let target = gauss::KlTarget::new(sigma, policy.dim()).map_err(to_py_err)?;
    let est = gauss::kl_monte_carlo_oracle(&policy, &target, n, seed).map_err(to_py_err)?;
    Ok((est.estimate, est.std_error))
}

/// Expected updates until a transition with sampling probability `prob`
/// recurs at batch size `batch_size`.
#[pyfunction]
fn expected_sampling_period(prob: f64, batch_size: usize) -> PyResult<f64> {
    replay::expected_sampling_period(prob, batch_size).map_err(to_py_err)
}

/// Clipped double-Q bootstrap target.
#[pyfunction]
fn clipped_double_q_target(r: f64, gamma: f64, q1: f64, q2: f64, done: bool) -> f64 {
    klper::agents::clipped_double_q_target(r, gamma, q1, q2, done)
}

/// Environment wrapper owning its own seeded reset stream.
#[pyclass]
struct Env {
    inner: Box<dyn Environment + Send + Sync>,
    rng: SeedRng,
}

fn make_boxed_env(name: &str) -> PyResult<Box<dyn Environment + Send + Sync>> {
    match name {
        "pendulum" => Ok(Box::new(klper::envs::Pendulum::new())),
        "reacher2d" => Ok(Box::new(klper::envs::Reacher2d::new())),
        other => Err(PyValueError::new_err(format!(
            "unknown environment '{other}'"
        ))),
    }
}

#[pymethods]
impl Env {
    #[new]
    #[pyo3(signature = (name, seed = 0))]
    fn new(name: &str, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: make_boxed_env(name)?,
            rng: derive(seed, Stream::Env),
        })
    }

    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset(&mut self.rng)
    }

    /// Returns (next_state, reward, done).
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool)> {
        let r = self.inner.step(&action).map_err(to_py_err)?;
        Ok((r.next_state, r.reward, r.done))
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.spec().state_dim
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.spec().action_dim
    }

    #[getter]
    fn action_bound(&self) -> Vec<f64> {
        self.inner.spec().action_bound.clone()
    }

    #[getter]
    fn max_episode_steps(&self) -> usize {
        self.inner.spec().max_episode_steps
    }
}

#[pyclass]
struct ReplayBuffer {
    inner: replay::ReplayBuffer,
    rng: SeedRng,
}

#[pymethods]
impl ReplayBuffer {
    #[new]
    #[pyo3(signature = (state_dim, action_dim, capacity, seed = 0))]
    fn new(state_dim: usize, action_dim: usize, capacity: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: replay::ReplayBuffer::new(state_dim, action_dim, capacity)
                .map_err(to_py_err)?,
            rng: derive(seed, Stream::Replay),
        })
    }

    fn push(
        &mut self,
        state: Vec<f64>,
        action: Vec<f64>,
        reward: f64,
        next_state: Vec<f64>,
        done: bool,
    ) -> PyResult<usize> {
        self.inner
            .push(replay::Transition {
                state,
                action,
                reward,
                next_state,
                done,
            })
            .map_err(to_py_err)
    }

    fn sample_uniform(&mut self, batch_size: usize) -> PyResult<Vec<usize>> {
        let batch = self
            .inner
            .sample_uniform(batch_size, &mut self.rng)
            .map_err(to_py_err)?;
        Ok(batch.indices().to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn capacity(&self) -> usize {
        self.inner.capacity()
    }
}

fn dict_value_to_string(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(b) = value.extract::<bool>() {
        return Ok(b.to_string());
    }
    Ok(value.str()?.to_string())
}

/// Run one training configuration. `options` holds the same keys as the CLI
/// config file (`algo`, `replay`, `env`, `seed`, `total_steps`, ...); the
/// `algo` key picks the default set. Returns a dict with the metrics path,
/// checkpoint dir, and the metrics rows.
#[pyfunction]
fn run_training<'py>(py: Python<'py>, options: &Bound<'py, PyDict>) -> PyResult<Bound<'py, PyDict>> {
    let algo = match options.get_item("algo")? {
        Some(v) => harness::Algo::parse(&v.str()?.to_string()).map_err(to_py_err)?,
        None => harness::Algo::Ddpg,
    };
    let mut config = RunConfig::defaults(algo);
    for (key, value) in options.iter() {
        let key: String = key.extract()?;
        config
            .apply_pair(&key, &dict_value_to_string(&value)?)
            .map_err(to_py_err)?;
    }
    config.validate().map_err(to_py_err)?;
    let artifacts = harness::train(&config).map_err(to_py_err)?;

    let rows = PyList::empty(py);
    for row in &artifacts.rows {
        let d = PyDict::new(py);
        d.set_item("step", row.step)?;
        d.set_item("eval_return_mean", row.eval_return_mean)?;
        d.set_item("eval_return_std", row.eval_return_std)?;
        d.set_item("critic_loss", row.critic_loss)?;
        d.set_item("actor_loss", row.actor_loss)?;
        d.set_item("kappa_selected", row.kappa_selected)?;
        d.set_item("kappa_candidates_mean", row.kappa_candidates_mean)?;
        d.set_item("wallclock_s", row.wallclock_s)?;
        rows.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("metrics_path", artifacts.metrics_path.display().to_string())?;
    out.set_item(
        "checkpoint_dir",
        artifacts.checkpoint_dir.display().to_string(),
    )?;
    out.set_item("rows", rows)?;
    Ok(out)
}

/// Evaluate a saved checkpoint: returns (mean, std, per-episode returns).
#[pyfunction]
#[pyo3(signature = (checkpoint_dir, episodes = 5, seed = 0, env = None))]
fn evaluate_checkpoint(
    checkpoint_dir: &str,
    episodes: usize,
    seed: u64,
    env: Option<&str>,
) -> PyResult<(f64, f64, Vec<f64>)> {
    let (agent, meta) =
        klper::agents::load_checkpoint(std::path::Path::new(checkpoint_dir)).map_err(to_py_err)?;
    let env_name = env.unwrap_or(&meta.env);
    let mut env = klper::envs::make_env(env_name).map_err(to_py_err)?;
    let mut rng = derive(seed, Stream::Eval);
    let stats =
        harness::evaluate(agent.as_ref(), env.as_mut(), episodes, &mut rng).map_err(to_py_err)?;
    Ok((stats.mean, stats.std, stats.returns))
}

#[pymodule]
fn klper_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_class::<ReplayBuffer>()?;
    m.add_function(wrap_pyfunction!(fit_batch_policy, m)?)?;
    m.add_function(wrap_pyfunction!(kl_to_isotropic, m)?)?;
    m.add_function(wrap_pyfunction!(kl_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(expected_sampling_period, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_double_q_target, m)?)?;
    m.add_function(wrap_pyfunction!(run_training, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_checkpoint, m)?)?;
    Ok(())
}
