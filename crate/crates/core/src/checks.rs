//! Finite-difference self-checks for every differentiable component.
//!
//! Each check builds random inputs and parameters from `seed`, takes the
//! scalar objective `sum(out * r)` for a fixed random `r` (cross-entropy
//! for the full network), and compares the analytic gradient against
//! central differences at randomly chosen coordinates.

use crate::model::{ModelSpec, Network};
use crate::tensor::{
    batchnorm_backward, batchnorm_forward_train, conv1d_backward, conv1d_forward, linear_backward,
    linear_forward, relu_backward, relu_forward, BatchNormParams, ConvParams, GradCheckReport, GradientCheck,
    LinearParams, Tensor,
};
use crate::Result;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step, tolerance and probes per tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub step: f64,
    pub tolerance: f64,
    pub probes: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            step: 1e-5,
            tolerance: 1e-4,
            probes: 20,
        }
    }
}

impl ProbeConfig {
    fn indices(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        sample(rng, len, self.probes.min(len)).into_vec()
    }

    fn checker(&self) -> GradientCheck {
        GradientCheck::new(self.step, self.tolerance)
    }
}

fn weighted_sum(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_vec(t.shape(), data.to_vec()).expect("same length")
}

/// Input `(n, c_in, len)`, weight `(c_out, c_in, kernel)`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d(
    n: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    config: ProbeConfig,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ConvParams::init_uniform(c_in, c_out, kernel, stride, padding, &mut rng);
    let x = Tensor::uniform(&[n, c_in, len], 1.0, &mut rng);
    let out = conv1d_forward(&x, &params)?;
    let r = Tensor::uniform(out.shape(), 1.0, &mut rng);
    let g = conv1d_backward(&x, &params, &r)?;
    let objective = |x: &Tensor, p: &ConvParams| weighted_sum(&conv1d_forward(x, p).unwrap(), &r);

    let mut gc = config.checker();
    let idx = config.indices(x.len(), &mut rng);
    gc.check("input", x.data(), g.input.data(), &idx, |v| objective(&with_data(&x, v), &params));
    let idx = config.indices(params.weight.len(), &mut rng);
    gc.check("weight", params.weight.data(), g.weight.data(), &idx, |v| {
        let p = ConvParams::new(with_data(&params.weight, v), params.bias.clone(), stride, padding).unwrap();
        objective(&x, &p)
    });
    let idx = config.indices(params.bias.len(), &mut rng);
    gc.check("bias", params.bias.data(), g.bias.data(), &idx, |v| {
        let p = ConvParams::new(params.weight.clone(), with_data(&params.bias, v), stride, padding).unwrap();
        objective(&x, &p)
    });
    Ok(gc.report())
}

/// Training-mode batch normalization on `(n, c, len)` with random affine
/// parameters.
pub fn batchnorm(n: usize, c: usize, len: usize, config: ProbeConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BatchNormParams::new(c);
    params.gamma = Tensor::from_vec(&[c], (0..c).map(|_| rng.random_range(0.5..1.5)).collect())?;
    params.beta = Tensor::uniform(&[c], 0.5, &mut rng);
    let x = Tensor::from_vec(
        &[n, c, len],
        (0..n * c * len).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )?;
    let r = Tensor::uniform(x.shape(), 1.0, &mut rng);
    let g = batchnorm_backward(&x, &params, &r)?;
    let objective = |x: &Tensor, p: &BatchNormParams| weighted_sum(&batchnorm_forward_train(x, p).unwrap().0, &r);

    let mut gc = config.checker();
    let idx = config.indices(x.len(), &mut rng);
    gc.check("input", x.data(), g.input.data(), &idx, |v| objective(&with_data(&x, v), &params));
    let idx = config.indices(c, &mut rng);
    gc.check("gamma", params.gamma.data(), g.gamma.data(), &idx, |v| {
        let mut p = params.clone();
        p.gamma = with_data(&params.gamma, v);
        objective(&x, &p)
    });
    gc.check("beta", params.beta.data(), g.beta.data(), &idx, |v| {
        let mut p = params.clone();
        p.beta = with_data(&params.beta, v);
        objective(&x, &p)
    });
    Ok(gc.report())
}

pub fn linear(n: usize, in_features: usize, out_features: usize, config: ProbeConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = LinearParams::init_uniform(in_features, out_features, &mut rng);
    let x = Tensor::uniform(&[n, in_features], 1.0, &mut rng);
    let r = Tensor::uniform(&[n, out_features], 1.0, &mut rng);
    let g = linear_backward(&x, &params, &r)?;
    let objective = |x: &Tensor, p: &LinearParams| weighted_sum(&linear_forward(x, p).unwrap(), &r);

    let mut gc = config.checker();
    let idx = config.indices(x.len(), &mut rng);
    gc.check("input", x.data(), g.input.data(), &idx, |v| objective(&with_data(&x, v), &params));
    let idx = config.indices(params.weight.len(), &mut rng);
    gc.check("weight", params.weight.data(), g.weight.data(), &idx, |v| {
        objective(&x, &LinearParams::new(with_data(&params.weight, v), params.bias.clone()).unwrap())
    });
    let idx = config.indices(out_features, &mut rng);
    gc.check("bias", params.bias.data(), g.bias.data(), &idx, |v| {
        objective(&x, &LinearParams::new(params.weight.clone(), with_data(&params.bias, v)).unwrap())
    });
    Ok(gc.report())
}

/// ReLU on inputs kept at least `0.1` away from the kink.
pub fn relu(shape: &[usize], config: ProbeConfig, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    let x = Tensor::from_vec(
        shape,
        (0..len)
            .map(|_| {
                let m = rng.random_range(0.1..2.0);
                if rng.random::<bool>() { m } else { -m }
            })
            .collect(),
    )?;
    let r = Tensor::uniform(shape, 1.0, &mut rng);
    let g = relu_backward(&x, &r)?;
    let mut gc = config.checker();
    let idx = config.indices(len, &mut rng);
    gc.check("input", x.data(), g.data(), &idx, |v| weighted_sum(&relu_forward(&with_data(&x, v)), &r));
    Ok(gc.report())
}

/// Whole-network check of the mean cross-entropy in training mode, on a
/// random `(n, W, M)` batch with random labels.
///
/// Convolution biases are excluded from the probes: each convolution feeds
/// a batch normalization that subtracts the per-channel mean, so their
/// exact gradient is zero and central differences only measure round-off.
/// [`network_conv_bias_gradient`] reports their analytic magnitude instead.
pub fn network(spec: &ModelSpec, n: usize, config: ProbeConfig, seed: u64) -> Result<GradCheckReport> {
    let (net, batch, labels, mut rng) = network_setup(spec, n, seed)?;
    let mut analytic = net.clone();
    analytic.backward(&batch, &labels)?;
    let names: Vec<String> = net.trainable_params().into_iter().map(|(name, _)| name).collect();
    let mut gc = config.checker();
    for (k, name) in names.iter().enumerate() {
        if name.ends_with("conv.bias") {
            continue;
        }
        let params = analytic.trainable_params();
        let point = net.trainable_params()[k].1.data().to_vec();
        let grad = params[k].1.grad().expect("backward sets every gradient").to_vec();
        let idx = config.indices(point.len(), &mut rng);
        gc.check(name, &point, &grad, &idx, |v| {
            let mut probe = net.clone();
            probe.trainable_params_mut()[k].data_mut().copy_from_slice(v);
            probe.loss(&batch, &labels, true).unwrap()
        });
    }
    Ok(gc.report())
}

/// Largest analytic gradient entry over all convolution biases (zero in
/// exact arithmetic).
pub fn network_conv_bias_gradient(spec: &ModelSpec, n: usize, seed: u64) -> Result<f64> {
    let (mut net, batch, labels, _) = network_setup(spec, n, seed)?;
    net.backward(&batch, &labels)?;
    Ok(net
        .trainable_params()
        .into_iter()
        .filter(|(name, _)| name.ends_with("conv.bias"))
        .flat_map(|(_, t)| t.grad().unwrap_or(&[]).to_vec())
        .fold(0.0, |m, g| m.max(g.abs())))
}

fn network_setup(spec: &ModelSpec, n: usize, seed: u64) -> Result<(Network, Tensor, Vec<usize>, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::build(spec, rng.random())?;
    let batch = Tensor::uniform(&[n, spec.window, spec.metrics], 1.0, &mut rng);
    let labels = (0..n).map(|_| rng.random_range(0..spec.classes)).collect();
    Ok((net, batch, labels, rng))
}
