use super::normalize::{apply_normalizer, fit_normalizer, Normalizer};
use super::WindowSample;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<()> {
        let all = [self.train, self.validation, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must be in [0,1] and sum to 1: {all:?}")));
        }
        Ok(())
    }
}

/// How windows are assigned to splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle individual windows across splits.
    #[default]
    Window,
    /// Split every VM's timeline into contiguous train/validation/test
    /// segments; windows crossing a segment boundary are discarded, so
    /// overlapping windows never share timesteps across splits.
    PerVm,
}

/// Windows assigned to splits, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSplit {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

/// Normalized, class-balanced splits together with the training statistics
/// used to normalize all three.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub normalizer: Normalizer,
}

fn group_by_class(windows: Vec<WindowSample>) -> Result<Vec<Vec<WindowSample>>> {
    let classes = windows.iter().map(|w| w.label + 1).max().unwrap_or(0);
    let mut groups: Vec<Vec<WindowSample>> = vec![Vec::new(); classes];
    for w in windows {
        groups[w.label].push(w);
    }
    if groups.len() < 2 {
        return Err(Error::Dataset("need windows from at least two classes".into()));
    }
    if let Some(c) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Dataset(format!("class {c} has no windows")));
    }
    Ok(groups)
}

/// Per-class sample counts for each split: totals are rounded on the whole
/// balanced set and spread over classes so per-class counts differ by at
/// most one.
fn allocate(per_class: usize, classes: usize, f: SplitFractions) -> [Vec<usize>; 3] {
    let total = per_class * classes;
    let t_train = (f.train * total as f64).round() as usize;
    let t_val = ((f.validation * total as f64).round() as usize).min(total - t_train);
    let totals = [t_train, t_val, total - t_train - t_val];
    let mut offset = 0;
    totals.map(|t| {
        let mut counts = vec![t / classes; classes];
        for k in 0..t % classes {
            counts[(offset + k) % classes] += 1;
        }
        offset += t % classes;
        counts
    })
}

/// Downsamples every class to the minority count, then splits each class
/// according to `fractions`. Deterministic in `seed`.
pub fn partition(
    windows: Vec<WindowSample>,
    fractions: SplitFractions,
    seed: u64,
    mode: SplitMode,
) -> Result<RawSplit> {
    fractions.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = match mode {
        SplitMode::Window => partition_windows(group_by_class(windows)?, fractions, &mut rng),
        SplitMode::PerVm => partition_per_vm(windows, fractions, &mut rng)?,
    };
    if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::Dataset(format!(
            "split too small: {} train / {} validation / {} test windows",
            split.train.len(),
            split.validation.len(),
            split.test.len()
        )));
    }
    Ok(split)
}

fn partition_windows(mut groups: Vec<Vec<WindowSample>>, f: SplitFractions, rng: &mut ChaCha8Rng) -> RawSplit {
    let minority = groups.iter().map(Vec::len).min().unwrap_or(0);
    let [train_n, val_n, _] = allocate(minority, groups.len(), f);
    let mut out = RawSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (c, g) in groups.iter_mut().enumerate() {
        g.shuffle(rng);
        g.truncate(minority);
        let test = g.split_off(train_n[c] + val_n[c]);
        let val = g.split_off(train_n[c]);
        out.train.append(g);
        out.validation.extend(val);
        out.test.extend(test);
    }
    out.train.shuffle(rng);
    out.validation.shuffle(rng);
    out.test.shuffle(rng);
    out
}

fn partition_per_vm(windows: Vec<WindowSample>, f: SplitFractions, rng: &mut ChaCha8Rng) -> Result<RawSplit> {
    let mut span: BTreeMap<String, usize> = BTreeMap::new();
    for w in &windows {
        let end = w.origin.start + w.width;
        let e = span.entry(w.origin.vm_id.clone()).or_insert(0);
        *e = (*e).max(end);
    }
    let mut parts: [Vec<WindowSample>; 3] = Default::default();
    for w in windows {
        let t = span[&w.origin.vm_id] as f64;
        let b1 = (f.train * t).round() as usize;
        let b2 = ((f.train + f.validation) * t).round() as usize;
        let (start, end) = (w.origin.start, w.origin.start + w.width);
        let slot = if end <= b1 {
            0
        } else if start >= b1 && end <= b2 {
            1
        } else if start >= b2 {
            2
        } else {
            continue;
        };
        parts[slot].push(w);
    }
    let mut slot = 0;
    let mut balanced = parts.map(|p| -> Result<Vec<WindowSample>> {
        let name = ["train", "validation", "test"][slot];
        slot += 1;
        let mut groups = group_by_class(p).map_err(|e| {
            Error::Dataset(format!("per-VM {name} segment: {e} (traces may be too short for this window)"))
        })?;
        let minority = groups.iter().map(Vec::len).min().unwrap_or(0);
        let mut out = Vec::new();
        for g in &mut groups {
            g.shuffle(rng);
            g.truncate(minority);
            out.append(g);
        }
        out.shuffle(rng);
        Ok(out)
    });
    let mut take = |i: usize| std::mem::replace(&mut balanced[i], Ok(Vec::new()));
    Ok(RawSplit {
        train: take(0)?,
        validation: take(1)?,
        test: take(2)?,
    })
}

/// Balances, splits (window-level) and normalizes with training statistics.
pub fn balance_and_split(windows: Vec<WindowSample>, fractions: SplitFractions, seed: u64) -> Result<DatasetSplit> {
    balance_and_split_with_mode(windows, fractions, seed, SplitMode::Window)
}

pub(crate) fn balance_and_split_with_mode(
    windows: Vec<WindowSample>,
    fractions: SplitFractions,
    seed: u64,
    mode: SplitMode,
) -> Result<DatasetSplit> {
    let RawSplit {
        mut train,
        mut validation,
        mut test,
    } = partition(windows, fractions, seed, mode)?;
    let normalizer = fit_normalizer(&train)?;
    apply_normalizer(&mut train, &normalizer)?;
    apply_normalizer(&mut validation, &normalizer)?;
    apply_normalizer(&mut test, &normalizer)?;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        normalizer,
    })
}
