use super::config::{derive_seed, TrainConfig};
use super::eval::validation_metrics;
use super::scheduler::PlateauScheduler;
use crate::data::{DatasetSplit, WindowSample};
use crate::model::{ModelSpec, Network};
use crate::tensor::{AdamConfig, AdamState, Tensor};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Rate used for this epoch's updates.
    pub learning_rate: f64,
    /// Whether the rate was reduced after this epoch.
    pub reduced: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Validation loss of the untrained network.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingHistory {
    /// One line per epoch: `epoch=.. train_loss=.. val_loss=.. val_acc=.. lr=..`.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            writeln!(
                out,
                "epoch={} train_loss={:.6} val_loss={:.6} val_acc={:.4} lr={:.6e}{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.val_accuracy,
                r.learning_rate,
                if r.reduced { " reduced" } else { "" }
            )
            .unwrap();
        }
        out
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation accuracy.
    pub network: Network,
    /// Parameters after the last epoch.
    pub final_network: Network,
    pub history: TrainingHistory,
}

/// Splits `order` into batches of `batch_size`. A trailing batch of one
/// sample is folded into the previous batch because batch normalization
/// cannot estimate a variance from it.
pub fn batch_plan(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(batch_size.max(1)).collect();
    if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let start = order.len() - 1 - batches.last().unwrap().len();
        *batches.last_mut().unwrap() = &order[start..];
    }
    batches
}

fn gather(samples: &[WindowSample], idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let first = &samples[idx[0]];
    let mut data = Vec::with_capacity(idx.len() * first.values.len());
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        data.extend_from_slice(&samples[i].values);
        labels.push(samples[i].label);
    }
    Ok((Tensor::from_vec(&[idx.len(), first.width, first.metrics], data)?, labels))
}

fn check_split(split: &DatasetSplit, config: &TrainConfig) -> Result<ModelSpec> {
    for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        if part.is_empty() {
            return Err(Error::Dataset(format!("{name} split is empty")));
        }
    }
    if split.train.len() < 2 {
        return Err(Error::Dataset("training needs at least two samples".into()));
    }
    let metrics = split.train[0].metrics;
    let all = split.train.iter().chain(&split.validation).chain(&split.test);
    if let Some(s) = all.clone().find(|s| s.width != config.window || s.metrics != metrics) {
        return Err(Error::shape(
            "train",
            format!(
                "sample {}@{} is {}x{}, expected {}x{metrics}",
                s.origin.vm_id, s.origin.start, s.width, s.metrics, config.window
            ),
        ));
    }
    let spec = ModelSpec::with_shape(config.window, metrics, ModelSpec::CLASSES, config.variant)?;
    if let Some(s) = all.clone().find(|s| s.label >= spec.classes) {
        return Err(Error::LabelOutOfRange {
            label: s.label,
            classes: spec.classes,
        });
    }
    Ok(spec)
}

/// Runs exactly `config.epochs` epochs of Adam over seeded shuffled
/// batches, evaluating on the validation split after each epoch, and
/// returns the snapshot with the best validation accuracy (ties: lower
/// validation loss, then earlier epoch).
pub fn train(split: &DatasetSplit, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = check_split(split, config)?;
    let mut net = Network::build(&spec, derive_seed(config.seed, INIT_STREAM))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut adam = {
        let params: Vec<&Tensor> = net.trainable_params().into_iter().map(|(_, t)| t).collect();
        AdamState::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                weight_decay: config.weight_decay,
                ..AdamConfig::default()
            },
            &params,
        )
    };
    let (initial_val_loss, _) = validation_metrics(&net, &split.validation)?;
    let mut scheduler = PlateauScheduler::new(config.learning_rate, config.plateau_factor, config.plateau_patience);
    if initial_val_loss.is_finite() {
        scheduler = scheduler.with_reference(initial_val_loss);
    }
    let mut history = TrainingHistory {
        initial_val_loss,
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, f64, Network)> = None;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=config.epochs {
        let learning_rate = scheduler.learning_rate();
        adam.learning_rate = learning_rate;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for idx in batch_plan(&order, config.batch_size) {
            let (batch, labels) = gather(&split.train, idx)?;
            net.zero_grad();
            let loss = net.backward(&batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("training loss {loss} on a batch of {}", idx.len()),
                });
            }
            adam.step(&mut net.trainable_params_mut())?;
            loss_sum += loss * idx.len() as f64;
        }
        net.zero_grad();
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_accuracy) = validation_metrics(&net, &split.validation)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("validation loss {val_loss}"),
            });
        }
        let reduced = scheduler.observe(val_loss);
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {val_accuracy:.4} lr {learning_rate:.3e}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            learning_rate,
            reduced,
        });
        let better = match &best {
            None => true,
            Some((acc, loss, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
        };
        if better {
            best = Some((val_accuracy, val_loss, net.clone()));
            history.best_epoch = epoch;
        }
    }
    let (_, _, network) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        network,
        final_network: net,
        history,
    })
}
