//! Small fully-connected network with hand-rolled reverse-mode gradients.
//!
//! Hidden layers are ReLU; the output head is either `Tanh` (actors, output
//! in [-1, 1] per dimension) or `Identity` (critics). Gradients are computed
//! by caching the forward activations (`forward_cached`) and propagating an
//! upstream gradient back through the stack (`backward`). `forward` itself is
//! pure and never touches the cache.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::matrix::{axpy, Matrix};
use crate::rng::SeedRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Tanh,
    Identity,
}

impl OutputActivation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            OutputActivation::Tanh => 1,
            OutputActivation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(OutputActivation::Tanh),
            2 => Ok(OutputActivation::Identity),
            other => Err(Error::Parse(format!("unknown activation tag {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    /// (out x in), row-major.
    w: Matrix,
    /// (1 x out).
    b: Matrix,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    input: Matrix,
    /// Post-activation output of every layer, in order.
    activations: Vec<Matrix>,
}

/// Per-parameter gradients, shaped exactly like the network's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    #[cfg(test)]
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.tensors.iter_mut().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    output_activation: OutputActivation,
    cache: Option<ForwardCache>,
}

impl Mlp {
    /// Fan-in uniform init for hidden layers, small uniform for the head.
    pub fn new(
        layer_sizes: &[usize],
        output_activation: OutputActivation,
        rng: &mut SeedRng,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer sizes must have >= 2 nonzero entries, got {layer_sizes:?}"
            )));
        }
        let n_layers = layer_sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[i], layer_sizes[i + 1]);
            let limit = if i + 1 == n_layers {
                3e-3
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
            let mut b = Matrix::zeros(1, fan_out);
            for v in b.data_mut() {
                *v = rng.random_range(-limit..limit);
            }
            layers.push(Layer { w, b });
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            output_activation,
            cache: None,
        })
    }

    /// All parameters zero; handy for fixed-point tests.
    pub fn zeroed(layer_sizes: &[usize], output_activation: OutputActivation) -> Result<Self> {
        let mut rng = crate::rng::derive(0, crate::rng::Stream::Init);
        let mut net = Self::new(layer_sizes, output_activation, &mut rng)?;
        for t in net.param_tensors_mut() {
            t.fill(0.0);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn param_tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|Layer { w, b }| [w, b])
            .collect()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes && self.output_activation == other.output_activation
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.is_finite() && l.b.is_finite())
    }

    /// Zero-shaped gradient container for this network.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self
                .layers
                .iter()
                .flat_map(|l| {
                    [
                        Matrix::zeros(l.w.rows(), l.w.cols()),
                        Matrix::zeros(l.b.rows(), l.b.cols()),
                    ]
                })
                .collect(),
        }
    }

    fn layer_forward(&self, idx: usize, input: &Matrix) -> Result<Matrix> {
        let layer = &self.layers[idx];
        let mut z = input.matmul_bt(&layer.w)?;
        let bias = layer.b.data();
        for r in 0..z.rows() {
            for (v, &b) in z.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
        let last = idx + 1 == self.layers.len();
        let out = if last {
            match self.output_activation {
                OutputActivation::Tanh => z.map(f64::tanh),
                OutputActivation::Identity => z,
            }
        } else {
            z.map(|v| if v > 0.0 { v } else { 0.0 })
        };
        Ok(out)
    }

    /// Pure batched forward pass: rows are samples.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} cols, network expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        let mut x = self.layer_forward(0, input)?;
        for idx in 1..self.layers.len() {
            x = self.layer_forward(idx, &x)?;
        }
        Ok(x)
    }

    /// Forward pass that retains activations for a subsequent `backward`.
    pub fn forward_cached(&mut self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} cols, network expects {}",
                input.cols(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for idx in 0..self.layers.len() {
            x = self.layer_forward(idx, &x)?;
            activations.push(x.clone());
        }
        let out = activations.last().unwrap().clone();
        self.cache = Some(ForwardCache {
            input: input.clone(),
            activations,
        });
        Ok(out)
    }

    /// Backpropagate `upstream` (dL/d_output, one row per sample) through the
    /// most recent `forward_cached` pass. Returns parameter gradients and the
    /// gradient with respect to the network input.
    pub fn backward(&mut self, upstream: &Matrix) -> Result<(Gradients, Matrix)> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::State("backward called without a cached forward pass".into())
        })?;
        let out = cache.activations.last().unwrap();
        if !upstream.same_shape(out) {
            return Err(Error::Shape(format!(
                "upstream is {}x{}, cached output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                out.rows(),
                out.cols()
            )));
        }

        let mut grads = self.zero_gradients();
        // dL/d(post-activation) of the layer currently being processed.
        let mut delta = upstream.clone();
        for idx in (0..self.layers.len()).rev() {
            let activation = &cache.activations[idx];
            let last = idx + 1 == self.layers.len();
            // Fold the activation derivative in: delta becomes dL/dz.
            if last {
                if self.output_activation == OutputActivation::Tanh {
                    for r in 0..delta.rows() {
                        let y = activation.row(r);
                        for (d, &yv) in delta.row_mut(r).iter_mut().zip(y) {
                            *d *= 1.0 - yv * yv;
                        }
                    }
                }
            } else {
                for r in 0..delta.rows() {
                    let y = activation.row(r);
                    for (d, &yv) in delta.row_mut(r).iter_mut().zip(y) {
                        if yv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }

            let input = if idx == 0 {
                &cache.input
            } else {
                &cache.activations[idx - 1]
            };
            let (dw, db) = (&mut grads.tensors[2 * idx], 2 * idx + 1);
            for r in 0..delta.rows() {
                let x_row = input.row(r);
                let d_row = delta.row(r);
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, x_row, dw.row_mut(o));
                    }
                }
            }
            {
                let db = &mut grads.tensors[db];
                for r in 0..delta.rows() {
                    axpy(1.0, delta.row(r), db.row_mut(0));
                }
            }

            // dL/d(input of this layer) = delta * W.
            let w = &self.layers[idx].w;
            let mut d_input = Matrix::zeros(delta.rows(), w.cols());
            for r in 0..delta.rows() {
                let d_row = delta.row(r);
                let out_row = d_input.row_mut(r);
                for (o, &d) in d_row.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, w.row(o), out_row);
                    }
                }
            }
            delta = d_input;
        }

        Ok((grads, delta))
    }

    /// Copy parameters from another network with the same architecture.
    pub fn copy_params_from(&mut self, other: &Mlp) -> Result<()> {
        if !self.same_architecture(other) {
            return Err(Error::Shape("copy between different architectures".into()));
        }
        for (dst, src) in self
            .param_tensors_mut()
            .into_iter()
            .zip(other.param_tensors())
        {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

/// Polyak blend: `target = tau * online + (1 - tau) * target`, per entry.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must be in [0, 1], got {tau}")));
    }
    if !target.same_architecture(online) {
        return Err(Error::Shape(
            "soft update between different architectures".into(),
        ));
    }
    for (t, o) in target
        .param_tensors_mut()
        .into_iter()
        .zip(online.param_tensors())
    {
        t.blend_from(o, tau)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    fn net(sizes: &[usize], act: OutputActivation, seed: u64) -> Mlp {
        let mut rng = derive(seed, Stream::Init);
        Mlp::new(sizes, act, &mut rng).unwrap()
    }

    #[test]
    fn zero_weight_actor_outputs_zero() {
        let net = Mlp::zeroed(&[3, 8, 2], OutputActivation::Tanh).unwrap();
        let input = Matrix::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.2]).unwrap();
        let out = net.forward(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_passes_through() {
        let mut net = Mlp::zeroed(&[3, 3], OutputActivation::Identity).unwrap();
        {
            let mut params = net.param_tensors_mut();
            let w = &mut params[0];
            for i in 0..3 {
                w[(i, i)] = 1.0;
            }
        }
        let input = Matrix::from_vec(1, 3, vec![0.25, -1.5, 4.0]).unwrap();
        let out = net.forward(&input).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        // Straight-line recomputation of a 2-layer net, one sample.
        let net = net(&[2, 3, 2], OutputActivation::Tanh, 11);
        let x = [0.3, -0.7];
        let params = net.param_tensors();
        let (w1, b1, w2, b2) = (params[0], params[1], params[2], params[3]);
        let mut h = [0.0f64; 3];
        for o in 0..3 {
            let z = w1[(o, 0)] * x[0] + w1[(o, 1)] * x[1] + b1[(0, o)];
            h[o] = z.max(0.0);
        }
        let mut expect = [0.0f64; 2];
        for o in 0..2 {
            let z = w2[(o, 0)] * h[0] + w2[(o, 1)] * h[1] + w2[(o, 2)] * h[2] + b2[(0, o)];
            expect[o] = z.tanh();
        }
        let out = net
            .forward(&Matrix::from_vec(1, 2, x.to_vec()).unwrap())
            .unwrap();
        assert!((out[(0, 0)] - expect[0]).abs() < 1e-15);
        assert!((out[(0, 1)] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn forward_is_pure_and_bitwise_repeatable() {
        let net = net(&[4, 16, 3], OutputActivation::Tanh, 3);
        let input = Matrix::from_vec(2, 4, vec![0.1, 0.2, 0.3, 0.4, -1.0, 2.0, -3.0, 4.0]).unwrap();
        let a = net.forward(&input).unwrap();
        let b = net.forward(&input).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn actor_outputs_bounded() {
        let net = net(&[3, 32, 2], OutputActivation::Tanh, 9);
        let mut rng = derive(10, Stream::Env);
        for _ in 0..50 {
            let input = Matrix::from_vec(
                1,
                3,
                (0..3).map(|_| rng.random_range(-100.0..100.0)).collect(),
            )
            .unwrap();
            let out = net.forward(&input).unwrap();
            assert!(out.data().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let net = net(&[3, 4, 1], OutputActivation::Identity, 0);
        let input = Matrix::zeros(1, 2);
        assert!(matches!(net.forward(&input), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut net = net(&[2, 3, 1], OutputActivation::Identity, 0);
        let upstream = Matrix::zeros(1, 1);
        assert!(matches!(net.backward(&upstream), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = net(&[2, 5, 2], OutputActivation::Tanh, 4);
        let input = Matrix::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        net.forward_cached(&input).unwrap();
        let (grads, d_input) = net.backward(&Matrix::zeros(3, 2)).unwrap();
        assert!(grads.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(d_input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_upstream_outer_input() {
        // Single identity-head layer: dL/dW[o][i] = upstream[o] * x[i].
        let mut net = Mlp::zeroed(&[2, 2], OutputActivation::Identity).unwrap();
        let input = Matrix::from_vec(1, 2, vec![3.0, -2.0]).unwrap();
        net.forward_cached(&input).unwrap();
        let upstream = Matrix::from_vec(1, 2, vec![1.0, 0.5]).unwrap();
        let (grads, _) = net.backward(&upstream).unwrap();
        let dw = &grads.tensors()[0];
        assert_eq!(dw[(0, 0)], 3.0);
        assert_eq!(dw[(0, 1)], -2.0);
        assert_eq!(dw[(1, 0)], 1.5);
        assert_eq!(dw[(1, 1)], -1.0);
        let db = &grads.tensors()[1];
        assert_eq!(db.data(), &[1.0, 0.5]);
    }

    #[test]
    fn soft_update_tau_extremes_and_midpoint() {
        let online = net(&[2, 4, 1], OutputActivation::Identity, 1);
        let mut target = Mlp::zeroed(&[2, 4, 1], OutputActivation::Identity).unwrap();

        // tau = 0: unchanged.
        soft_update(&mut target, &online, 0.0).unwrap();
        assert!(target.param_tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));

        // tau = 0.5 from zero: exactly half the online weights.
        soft_update(&mut target, &online, 0.5).unwrap();
        for (t, o) in target.param_tensors().iter().zip(online.param_tensors()) {
            for (tv, ov) in t.data().iter().zip(o.data()) {
                assert_eq!(*tv, 0.5 * ov);
            }
        }

        // tau = 1: exact copy.
        soft_update(&mut target, &online, 1.0).unwrap();
        for (t, o) in target.param_tensors().iter().zip(online.param_tensors()) {
            assert_eq!(t.data(), o.data());
        }
    }

    #[test]
    fn soft_update_rejects_bad_tau() {
        let online = net(&[2, 2], OutputActivation::Identity, 1);
        let mut target = online.clone();
        assert!(matches!(
            soft_update(&mut target, &online, 1.5),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            soft_update(&mut target, &online, -0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn repeated_soft_update_contracts_by_one_minus_tau() {
        let online = net(&[3, 6, 2], OutputActivation::Tanh, 5);
        let mut target = net(&[3, 6, 2], OutputActivation::Tanh, 6);
        let tau = 0.25;
        let gap = |t: &Mlp| -> f64 {
            t.param_tensors()
                .iter()
                .zip(online.param_tensors())
                .flat_map(|(a, b)| {
                    a.data()
                        .iter()
                        .zip(b.data())
                        .map(|(x, y)| (x - y) * (x - y))
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = gap(&target);
        for _ in 0..5 {
            soft_update(&mut target, &online, tau).unwrap();
            let next = gap(&target);
            assert!((next - (1.0 - tau) * prev).abs() <= 1e-12 * prev.max(1.0));
            prev = next;
        }
    }
}
