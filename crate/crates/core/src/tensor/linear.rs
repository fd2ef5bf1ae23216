use super::Tensor;
use crate::par::{dot, for_each_chunk_mut};
use crate::{Error, Result};
use rand::Rng;

/// Fully connected layer: `weight` is `(out_features, in_features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (out_f, _) = weight.dims2("linear params")?;
        if bias.shape() != [out_f] {
            return Err(Error::shape(
                "linear params",
                format!("bias {:?} for {out_f} outputs", bias.shape()),
            ));
        }
        Ok(LinearParams { weight, bias })
    }

    /// Weights and biases uniform in `±1/sqrt(in_features)`.
    pub fn init_uniform<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        LinearParams {
            weight: Tensor::uniform(&[out_features, in_features], bound, rng),
            bias: Tensor::uniform(&[out_features], bound, rng),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check_input(&self, input: &Tensor, op: &'static str) -> Result<(usize, usize)> {
        let (n, f) = input.dims2(op)?;
        if f != self.in_features() {
            return Err(Error::shape(
                op,
                format!("input has {f} features, layer expects {}", self.in_features()),
            ));
        }
        Ok((n, f))
    }
}

/// `out = input * weight^T + bias` for an `(N, F)` input.
pub fn linear_forward(input: &Tensor, params: &LinearParams) -> Result<Tensor> {
    let (n, f) = params.check_input(input, "linear_forward")?;
    let o = params.out_features();
    let (x, w, b) = (input.data(), params.weight.data(), params.bias.data());
    let mut out = vec![0.0; n * o];
    for_each_chunk_mut(&mut out, o, |i, row| {
        let xi = &x[i * f..(i + 1) * f];
        for (j, v) in row.iter_mut().enumerate() {
            *v = b[j] + dot(xi, &w[j * f..(j + 1) * f]);
        }
    });
    Tensor::from_vec(&[n, o], out)
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn linear_backward(input: &Tensor, params: &LinearParams, grad_out: &Tensor) -> Result<LinearGrads> {
    let (n, f) = params.check_input(input, "linear_backward")?;
    let o = params.out_features();
    if grad_out.shape() != [n, o] {
        return Err(Error::shape(
            "linear_backward",
            format!("grad_out {:?}, expected {:?}", grad_out.shape(), [n, o]),
        ));
    }
    let (x, w, g) = (input.data(), params.weight.data(), grad_out.data());

    let mut gx = vec![0.0; n * f];
    for_each_chunk_mut(&mut gx, f, |i, row| {
        for j in 0..o {
            let gij = g[i * o + j];
            for (v, &wv) in row.iter_mut().zip(&w[j * f..(j + 1) * f]) {
                *v += gij * wv;
            }
        }
    });

    let mut gw = vec![0.0; o * f];
    for_each_chunk_mut(&mut gw, f, |j, row| {
        for i in 0..n {
            let gij = g[i * o + j];
            for (v, &xv) in row.iter_mut().zip(&x[i * f..(i + 1) * f]) {
                *v += gij * xv;
            }
        }
    });

    let gb: Vec<f64> = (0..o).map(|j| (0..n).map(|i| g[i * o + j]).sum()).collect();

    Ok(LinearGrads {
        input: Tensor::from_vec(&[n, f], gx)?,
        weight: Tensor::from_vec(&[o, f], gw)?,
        bias: Tensor::from_vec(&[o], gb)?,
    })
}
