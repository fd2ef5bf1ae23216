use super::Tensor;
use crate::Result;

/// `max(x, 0)` elementwise. NaN stays NaN so that numerical failures reach
/// the loss instead of being silently clamped.
pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes `grad_out` where the input was strictly positive. The subgradient
/// at exactly zero is taken as 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    input.same_shape(grad_out, "relu_backward")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}
