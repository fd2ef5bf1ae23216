use super::Tensor;
use crate::par::for_each_chunk_mut;
use crate::{Error, Result};

/// Per-channel batch normalization over the batch and length axes of an
/// `(N, C, L)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormParams {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    /// `gamma = 1`, `beta = 0`, running statistics at the identity
    /// (mean 0, variance 1).
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `running <- (1 - momentum) * running + momentum * batch`.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }

    fn check(&self, c: usize, op: &'static str) -> Result<()> {
        if self.channels() != c {
            return Err(Error::shape(
                op,
                format!("input has {c} channels, layer normalizes {}", self.channels()),
            ));
        }
        Ok(())
    }
}

/// Per-channel mean and biased variance of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn batch_stats(input: &Tensor, op: &'static str) -> Result<(usize, usize, usize, BatchStats)> {
    let (n, c, l) = input.dims3(op)?;
    let count = n * l;
    if count < 2 {
        return Err(Error::DegenerateBatch { count });
    }
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let rows = (0..n).map(|i| &x[(i * c + ch) * l..(i * c + ch + 1) * l]);
        let mu = rows.clone().flatten().sum::<f64>() / count as f64;
        let v = rows.flatten().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / count as f64;
        mean[ch] = mu;
        var[ch] = v;
    }
    Ok((n, c, l, BatchStats { mean, var }))
}

fn affine(input: &Tensor, params: &BatchNormParams, mean: &[f64], var: &[f64]) -> Result<Tensor> {
    let (_, c, l) = input.dims3("batchnorm")?;
    let scale: Vec<f64> = (0..c)
        .map(|ch| params.gamma.data()[ch] / (var[ch] + params.epsilon).sqrt())
        .collect();
    let mut out = input.data().to_vec();
    for_each_chunk_mut(&mut out, c * l, |_, sample| {
        for (ch, row) in sample.chunks_exact_mut(l).enumerate() {
            let (mu, s, b) = (mean[ch], scale[ch], params.beta.data()[ch]);
            for v in row {
                *v = (*v - mu) * s + b;
            }
        }
    });
    Tensor::from_vec(input.shape(), out)
}

/// Training-mode normalization with batch statistics. Does not touch the
/// running statistics; see [`BatchNormParams::update_running`].
pub fn batchnorm_forward_train(input: &Tensor, params: &BatchNormParams) -> Result<(Tensor, BatchStats)> {
    let (_, c, _, stats) = batch_stats(input, "batchnorm_forward")?;
    params.check(c, "batchnorm_forward")?;
    let out = affine(input, params, &stats.mean, &stats.var)?;
    Ok((out, stats))
}

/// Eval-mode normalization: a fixed per-channel affine map built from the
/// running statistics.
pub fn batchnorm_forward_eval(input: &Tensor, params: &BatchNormParams) -> Result<Tensor> {
    let (_, c, _) = input.dims3("batchnorm_forward")?;
    params.check(c, "batchnorm_forward")?;
    affine(
        input,
        params,
        params.running_mean.data(),
        params.running_var.data(),
    )
}

/// Normalizes `input`; in training mode also folds the batch statistics into
/// the running estimates.
pub fn batchnorm_forward(input: &Tensor, params: &mut BatchNormParams, training: bool) -> Result<Tensor> {
    if training {
        let (out, stats) = batchnorm_forward_train(input, params)?;
        params.update_running(&stats);
        Ok(out)
    } else {
        batchnorm_forward_eval(input, params)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// Gradient of training-mode batch normalization. With `m = N*L` and
/// `x_hat` the normalized input:
///
/// `dx = gamma / (m * sigma) * (m * dy - sum(dy) - x_hat * sum(dy * x_hat))`
pub fn batchnorm_backward(
    input: &Tensor,
    params: &BatchNormParams,
    grad_out: &Tensor,
) -> Result<BatchNormGrads> {
    input.same_shape(grad_out, "batchnorm_backward")?;
    let (n, c, l, stats) = batch_stats(input, "batchnorm_backward")?;
    params.check(c, "batchnorm_backward")?;
    let m = (n * l) as f64;
    let x = input.data();
    let dy = grad_out.data();
    let inv_std: Vec<f64> = stats
        .var
        .iter()
        .map(|v| 1.0 / (v + params.epsilon).sqrt())
        .collect();

    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * l;
            for t in 0..l {
                let xh = (x[base + t] - stats.mean[ch]) * inv_std[ch];
                sum_dy[ch] += dy[base + t];
                sum_dy_xhat[ch] += dy[base + t] * xh;
            }
        }
    }

    let gamma = params.gamma.data();
    let mut dx = vec![0.0; x.len()];
    for_each_chunk_mut(&mut dx, c * l, |i, sample| {
        for (ch, row) in sample.chunks_exact_mut(l).enumerate() {
            let base = (i * c + ch) * l;
            let k = gamma[ch] * inv_std[ch] / m;
            for (t, v) in row.iter_mut().enumerate() {
                let xh = (x[base + t] - stats.mean[ch]) * inv_std[ch];
                *v = k * (m * dy[base + t] - sum_dy[ch] - xh * sum_dy_xhat[ch]);
            }
        }
    });

    Ok(BatchNormGrads {
        input: Tensor::from_vec(input.shape(), dx)?,
        gamma: Tensor::from_vec(&[c], sum_dy_xhat)?,
        beta: Tensor::from_vec(&[c], sum_dy)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_normalization() {
        let mut p = BatchNormParams::new(1);
        let x = Tensor::from_vec(&[1, 1, 4], vec![1., 2., 3., 4.]).unwrap();
        let y = batchnorm_forward(&x, &mut p, true).unwrap();
        // mean 2.5, biased variance 1.25
        let s = (1.25f64 + 1e-5).sqrt();
        let expect = [-1.5 / s, -0.5 / s, 0.5 / s, 1.5 / s];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((y.data()[0] + 1.3416).abs() < 1e-4);
        assert!((y.data()[1] + 0.4472).abs() < 1e-4);
        // running stats moved 10% toward the batch
        assert!((p.running_mean.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.running_var.data()[0] - (0.9 + 0.125)).abs() < 1e-12);
    }

    #[test]
    fn identity_on_standardized_data() {
        let x = Tensor::from_vec(&[2, 1, 2], vec![1., -1., 1., -1.]).unwrap();
        let (y, _) = batchnorm_forward_train(&x, &BatchNormParams::new(1)).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = BatchNormParams::new(3);
        p.gamma = Tensor::zeros(&[3]);
        p.beta = Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let x = Tensor::uniform(&[4, 3, 5], 3.0, &mut rng);
        let (y, _) = batchnorm_forward_train(&x, &p).unwrap();
        for (idx, v) in y.data().iter().enumerate() {
            assert_eq!(*v, p.beta.data()[(idx / 5) % 3]);
        }
    }

    #[test]
    fn single_value_batch_is_rejected_in_training_only() {
        let mut p = BatchNormParams::new(2);
        let x = Tensor::zeros(&[1, 2, 1]);
        assert!(matches!(
            batchnorm_forward(&x, &mut p, true),
            Err(Error::DegenerateBatch { count: 1 })
        ));
        assert!(batchnorm_forward(&x, &mut p, false).is_ok());
    }

    #[test]
    fn eval_mode_ignores_batch_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = BatchNormParams::new(2);
        p.running_mean = Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap();
        p.running_var = Tensor::from_vec(&[2], vec![2.0, 0.5]).unwrap();
        let a = Tensor::uniform(&[1, 2, 3], 1.0, &mut rng);
        let b = Tensor::uniform(&[1, 2, 3], 1.0, &mut rng);
        let mut both = a.data().to_vec();
        both.extend_from_slice(b.data());
        let ab = Tensor::from_vec(&[2, 2, 3], both).unwrap();
        let ya = batchnorm_forward(&a, &mut p, false).unwrap();
        let yab = batchnorm_forward(&ab, &mut p, false).unwrap();
        assert_eq!(ya.data(), &yab.data()[..6]);
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform(&[3, 2, 4], 1.0, &mut rng);
        let g = batchnorm_backward(&x, &BatchNormParams::new(2), &Tensor::zeros(&[3, 2, 4])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.gamma.data().iter().all(|&v| v == 0.0));
        assert!(g.beta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_has_no_mean_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::uniform(&[5, 1, 3], 2.0, &mut rng);
        let dy = Tensor::uniform(&[5, 1, 3], 1.0, &mut rng);
        let g = batchnorm_backward(&x, &BatchNormParams::new(1), &dy).unwrap();
        let s: f64 = g.input.data().iter().sum();
        assert!(s.abs() < 1e-12, "sum {s}");
    }
}
