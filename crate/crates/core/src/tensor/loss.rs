use super::Tensor;
use crate::{Error, Result};

/// Row-wise softmax of `(N, C)` logits, computed after subtracting each
/// row's maximum. NaN inputs propagate to NaN outputs.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, c) = logits.dims2("softmax")?;
    if c < 2 {
        return Err(Error::shape("softmax", format!("need at least 2 classes, got {c}")));
    }
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let max = if row.iter().any(|v| v.is_nan()) { f64::NAN } else { max };
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Mean cross-entropy of `(N, C)` logits against integer labels, together
/// with its gradient `(softmax - onehot) / N`.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c) = logits.dims2("cross_entropy")?;
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let mut probs = softmax(logits)?;
    let x = logits.data();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &x[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
    }
    let grad = probs.data_mut();
    for (i, &y) in labels.iter().enumerate() {
        grad[i * c + y] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    Ok((loss * inv_n, probs))
}
