use super::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coupled L2 penalty: added to the gradient as `weight_decay * param`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam moment buffers for an ordered list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl AdamState {
    /// Zeroed moments sized after `params`, in the order they will be passed
    /// to [`AdamState::step`].
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        AdamState {
            step_count: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
        }
    }

    /// One bias-corrected Adam update. Every parameter must carry a gradient;
    /// gradients are left in place.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "state tracks {} parameters, got {}",
                    self.first_moment.len(),
                    params.len()
                ),
            ));
        }
        for (index, (p, m)) in params.iter().zip(&self.first_moment).enumerate() {
            match p.grad() {
                None => return Err(Error::MissingGradient { index }),
                Some(g) if g.len() != m.len() => {
                    return Err(Error::shape(
                        "adam_step",
                        format!("parameter {index} has {} values, state has {}", g.len(), m.len()),
                    ))
                }
                Some(_) => {}
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let (lr, eps, wd) = (self.learning_rate, self.epsilon, self.weight_decay);

        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let g = p.grad().expect("checked above").to_vec();
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let gi = g[i] + wd * *w;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
