//! Minimal dense tensor engine.
//!
//! Only the fixed layer sequence used by the classifiers is supported, each
//! with an explicit analytic backward pass. There is no autodiff graph: the
//! network in [`crate::model`] calls the backward functions in reverse order
//! itself.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod gradcheck;
mod linear;
mod loss;

pub use activation::{relu_backward, relu_forward};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_forward_eval, batchnorm_forward_train,
    BatchNormGrads, BatchNormParams, BatchStats,
};
pub(crate) use conv::conv1d_backward_impl;
pub use conv::{conv1d_backward, conv1d_forward, conv_output_len, ConvGrads, ConvParams};
pub use gradcheck::{relative_error, GradCheckReport, GradientCheck, ParamCheck};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearParams};
pub use loss::{cross_entropy_loss, softmax};

use crate::{Error, Result};
use rand::Rng;

/// Dense row-major tensor of `f64` with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            shape.iter().all(|&d| d > 0),
            "tensor dimensions must be positive: {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// Entries drawn uniformly from `[-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.data {
            *v = rng.random_range(-bound..bound);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::shape(
                "set_grad",
                format!("gradient has {} values, tensor has {}", grad.len(), self.data.len()),
            ));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Same data viewed under a new shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::shape(op, format!("expected rank 2, got {:?}", self.shape))),
        }
    }

    pub(crate) fn dims3(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::shape(op, format!("expected rank 3, got {:?}", self.shape))),
        }
    }

    /// Swaps the last two axes of a rank-3 tensor: `(N, A, B) -> (N, B, A)`.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let (n, a, b) = self.dims3("transpose_last2")?;
        let mut out = vec![0.0; self.data.len()];
        for i in 0..n {
            let src = &self.data[i * a * b..(i + 1) * a * b];
            let dst = &mut out[i * a * b..(i + 1) * a * b];
            for r in 0..a {
                for c in 0..b {
                    dst[c * a + r] = src[r * b + c];
                }
            }
        }
        Tensor::from_vec(&[n, b, a], out)
    }

    pub(crate) fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_element_count() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 3], vec![0.0; 5]),
            Err(Error::Shape { .. })
        ));
        assert!(Tensor::from_vec(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn grad_must_match_length() {
        let mut t = Tensor::zeros(&[4]);
        assert!(t.set_grad(vec![1.0; 3]).is_err());
        t.set_grad(vec![1.0; 4]).unwrap();
        assert_eq!(t.grad().unwrap().len(), 4);
        t.clear_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn transpose_last2_swaps_axes() {
        let t = Tensor::from_vec(&[1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let u = t.transpose_last2().unwrap();
        assert_eq!(u.shape(), &[1, 3, 2]);
        assert_eq!(u.data(), &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(u.transpose_last2().unwrap(), t);
    }
}
