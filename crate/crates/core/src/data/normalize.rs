use super::WindowSample;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-metric standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn metrics(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes a row-major `(T x M)` block in place.
    pub fn apply_rows(&self, values: &mut [f64]) {
        let m = self.metrics();
        for row in values.chunks_exact_mut(m) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
    }

    pub fn apply(&self, sample: &mut WindowSample) -> Result<()> {
        if sample.metrics != self.metrics() {
            return Err(Error::shape(
                "normalize",
                format!("sample has {} metrics, normalizer {}", sample.metrics, self.metrics()),
            ));
        }
        self.apply_rows(&mut sample.values);
        Ok(())
    }
}

/// Per-metric mean and population standard deviation over every timestep of
/// every training window. Constant metrics get `std = 1`.
pub fn fit_normalizer(train: &[WindowSample]) -> Result<Normalizer> {
    let first = train
        .first()
        .ok_or_else(|| Error::Dataset("cannot fit a normalizer on an empty training set".into()))?;
    let m = first.metrics;
    let count: usize = train.iter().map(|s| s.width).sum();
    if count < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 training values per metric, got {count}"
        )));
    }
    let mut mean = vec![0.0; m];
    for s in train {
        for row in s.values.chunks_exact(m) {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= count as f64);
    let mut var = vec![0.0; m];
    for s in train {
        for row in s.values.chunks_exact(m) {
            for k in 0..m {
                let d = row[k] - mean[k];
                var[k] += d * d;
            }
        }
    }
    let std = var
        .iter()
        .zip(&mean)
        .map(|(v, mu)| {
            let sd = (v / count as f64).sqrt();
            // Values identical up to summation round-off count as constant.
            if sd <= 1e-12 * mu.abs().max(1.0) {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Ok(Normalizer { mean, std })
}

pub fn apply_normalizer(windows: &mut [WindowSample], normalizer: &Normalizer) -> Result<()> {
    windows.iter_mut().try_for_each(|s| normalizer.apply(s))
}
