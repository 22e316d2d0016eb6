//! Gaussian batch-generating policy and its KL score.
//!
//! A sampled batch's action deltas (stored action minus the current actor's
//! action, one row per transition) are summarized by a Gaussian: the column
//! means and the unbiased sample covariance, lightly regularized so the
//! covariance stays positive definite even for degenerate batches. The KL
//! divergence from that Gaussian to an isotropic zero-mean target measures
//! how off-policy the batch looks; lower is more on-policy.
//!
//! `kl_monte_carlo_oracle` estimates the same divergence by sampling, as an
//! independent check on the closed form.

use rand_chacha::rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::rng::SeedRng;

/// Diagonal loading added to every fitted covariance. Keeps the Cholesky
/// factorization alive when all deltas in a batch coincide (e.g. saturated
/// actions).
pub const COV_REGULARIZER: f64 = 1e-6;

/// Gaussian over action-space deltas: mean vector and covariance matrix.
#[derive(Debug, Clone)]
pub struct BatchPolicy {
    mean: Vec<f64>,
    cov: Matrix,
}

impl BatchPolicy {
    /// Covariance must be square, match the mean length, and be symmetric
    /// within 1e-12.
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        let l = mean.len();
        if cov.rows() != l || cov.cols() != l {
            return Err(Error::Shape(format!(
                "covariance is {}x{}, mean has length {l}",
                cov.rows(),
                cov.cols()
            )));
        }
        for i in 0..l {
            for j in (i + 1)..l {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Degenerate(format!(
                        "covariance asymmetric at ({i},{j}): {} vs {}",
                        cov[(i, j)],
                        cov[(j, i)]
                    )));
                }
            }
        }
        if mean.iter().any(|v| !v.is_finite()) || !cov.is_finite() {
            return Err(Error::Degenerate("non-finite policy moments".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }
}

/// Isotropic target N(0, sigma * I): `sigma` is the per-dimension variance.
#[derive(Debug, Clone, Copy)]
pub struct KlTarget {
    sigma: f64,
    dim: usize,
}

impl KlTarget {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        if dim == 0 {
            return Err(Error::Config("target dimension must be >= 1".into()));
        }
        Ok(Self { sigma, dim })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Fit the batch-generating policy from a (batch x action-dim) delta matrix:
/// column means, unbiased sample covariance (1/(b-1)), then diagonal loading.
pub fn fit_batch_policy(deltas: &Matrix) -> Result<BatchPolicy> {
    let b = deltas.rows();
    let l = deltas.cols();
    if b < 2 {
        return Err(Error::InsufficientSamples(format!(
            "covariance needs at least 2 rows, got {b}"
        )));
    }
    let mean = deltas.column_means();
    let mut cov = Matrix::zeros(l, l);
    for k in 0..b {
        let row = deltas.row(k);
        for i in 0..l {
            let di = row[i] - mean[i];
            for j in i..l {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (b - 1) as f64;
    for i in 0..l {
        for j in i..l {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
        cov[(i, i)] += COV_REGULARIZER;
    }
    BatchPolicy::new(mean, cov)
}

/// Closed-form KL divergence from the fitted Gaussian to N(0, sigma * I):
///
/// kappa = 1/2 * [ (tr(cov) + mean' mean) / sigma - l + l ln(sigma) - ln det(cov) ]
///
/// The terms are grouped per dimension so that a policy identical to the
/// target yields exactly 0.0 rather than a stray ulp.
pub fn kl_to_isotropic(policy: &BatchPolicy, target: &KlTarget) -> Result<f64> {
    let l = policy.dim();
    if l != target.dim() {
        return Err(Error::Shape(format!(
            "policy dim {l} vs target dim {}",
            target.dim()
        )));
    }
    let chol = cholesky(policy.cov())?;
    let sigma = target.sigma();
    let ln_target_std = sigma.sqrt().ln();
    let mut acc = 0.0f64;
    for i in 0..l {
        // (cov_ii / sigma - 1) + (ln sigma - 2 ln L_ii)
        acc += policy.cov()[(i, i)] / sigma - 1.0;
        acc += 2.0 * (ln_target_std - chol[(i, i)].ln());
    }
    let mean_sq: f64 = policy.mean().iter().map(|v| v * v).sum();
    Ok(0.5 * (acc + mean_sq / sigma))
}

/// Monte-Carlo estimate of the same divergence with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct KlEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Sample n points from the policy and average
/// `ln p_policy(x) - ln p_target(x)`. Requires n >= 10^4 so the standard
/// error is meaningful.
pub fn kl_monte_carlo_oracle(
    policy: &BatchPolicy,
    target: &KlTarget,
    n: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if n < 10_000 {
        return Err(Error::Config(format!(
            "oracle needs at least 10^4 samples, got {n}"
        )));
    }
    let l = policy.dim();
    if l != target.dim() {
        return Err(Error::Shape(format!(
            "policy dim {l} vs target dim {}",
            target.dim()
        )));
    }
    let chol = cholesky(policy.cov())?;
    let log_det: f64 = (0..l).map(|i| 2.0 * chol[(i, i)].ln()).sum();
    let sigma = target.sigma();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();

    let mut rng = SeedRng::seed_from_u64(seed);
    let mut z = vec![0.0f64; l];
    let mut x = vec![0.0f64; l];
    let mut y = vec![0.0f64; l];
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        // x = mean + L z
        for i in 0..l {
            let mut acc = policy.mean()[i];
            for (j, &zj) in z.iter().enumerate().take(i + 1) {
                acc += chol[(i, j)] * zj;
            }
            x[i] = acc;
        }
        // Solve L y = x - mean; quadratic form is y' y.
        for i in 0..l {
            let mut acc = x[i] - policy.mean()[i];
            for j in 0..i {
                acc -= chol[(i, j)] * y[j];
            }
            y[i] = acc / chol[(i, i)];
        }
        let quad_policy: f64 = y.iter().map(|v| v * v).sum();
        let quad_target: f64 = x.iter().map(|v| v * v).sum::<f64>() / sigma;
        let ln_p_policy = -0.5 * (l as f64 * ln_2pi + log_det + quad_policy);
        let ln_p_target = -0.5 * (l as f64 * (ln_2pi + sigma.ln()) + quad_target);
        let diff = ln_p_policy - ln_p_target;
        sum += diff;
        sum_sq += diff * diff;
    }
    let n_f = n as f64;
    let mean = sum / n_f;
    let var = (sum_sq - n_f * mean * mean) / (n_f - 1.0);
    Ok(KlEstimate {
        estimate: mean,
        std_error: (var.max(0.0) / n_f).sqrt(),
    })
}

/// Lower-triangular Cholesky factor; fails on non-positive-definite input.
fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Degenerate(format!(
                        "covariance not positive definite (pivot {sum} at {i})"
                    )));
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}
