use crate::data::{stack_windows, Origin, WindowSample};
use crate::model::Network;
use crate::tensor::{cross_entropy_loss, Tensor};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Samples per forward pass during evaluation; chunks run concurrently.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub origin: Origin,
    pub predicted: usize,
    pub actual: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub error_percent: f64,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_sample: Vec<SamplePrediction>,
    /// Epoch (1-based) of the selected snapshot, when known.
    pub epoch_of_best: Option<usize>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum()
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Eval-mode logits for every sample, in order, with their labels.
fn logits_in_chunks(net: &Network, samples: &[WindowSample]) -> Result<Vec<(Tensor, Vec<usize>)>> {
    let chunks: Vec<&[WindowSample]> = samples.chunks(EVAL_CHUNK).collect();
    crate::par::map_slice(&chunks, |chunk| {
        let (batch, labels) = stack_windows(chunk.iter())?;
        Ok((net.forward_eval(&batch)?, labels))
    })
    .into_iter()
    .collect()
}

fn check_labels(net: &Network, samples: &[WindowSample]) -> Result<()> {
    let classes = net.spec().classes;
    match samples.iter().find(|s| s.label >= classes) {
        Some(s) => Err(Error::LabelOutOfRange { label: s.label, classes }),
        None => Ok(()),
    }
}

/// Accuracy and confusion of `net` (eval mode) on `samples`; prediction is
/// the arg-max logit.
pub fn evaluate(net: &Network, samples: &[WindowSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty sample list".into()));
    }
    check_labels(net, samples)?;
    let classes = net.spec().classes;
    let mut confusion = vec![vec![0; classes]; classes];
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut idx = 0;
    for (logits, labels) in logits_in_chunks(net, samples)? {
        for (row, &actual) in logits.data().chunks(classes).zip(&labels) {
            let predicted = argmax(row);
            confusion[actual][predicted] += 1;
            per_sample.push(SamplePrediction {
                origin: samples[idx].origin.clone(),
                predicted,
                actual,
            });
            idx += 1;
        }
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / samples.len() as f64;
    Ok(EvalReport {
        accuracy,
        error_percent: 100.0 * (1.0 - accuracy),
        confusion,
        per_sample,
        epoch_of_best: None,
    })
}

/// Mean cross-entropy and accuracy in eval mode.
pub fn validation_metrics(net: &Network, samples: &[WindowSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Dataset("empty validation set".into()));
    }
    check_labels(net, samples)?;
    let classes = net.spec().classes;
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (logits, labels) in logits_in_chunks(net, samples)? {
        let (loss, _) = cross_entropy_loss(&logits, &labels)?;
        loss_sum += loss * labels.len() as f64;
        correct += logits
            .data()
            .chunks(classes)
            .zip(&labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
    }
    let n = samples.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 1.0]), 1);
    }
}
