//! Trace ingestion and preprocessing.
//!
//! A VM trace is a `(T x M)` matrix sampled every five minutes. Traces are
//! cut into fixed-length windows, balanced across classes, split into
//! train/validation/test sets and standardized with training statistics.

mod ingest;
mod normalize;
mod split;
mod synth;
mod window;

pub use ingest::{
    ingest_csv, parse_class, read_manifest, read_trace_csv, write_manifest, write_trace_csv,
    ManifestEntry,
};
pub use normalize::{apply_normalizer, fit_normalizer, Normalizer};
pub use split::{balance_and_split, partition, DatasetSplit, RawSplit, SplitFractions, SplitMode};
pub use synth::{synthesize, ClassArchetype, MetricArchetype, SynthConfig};
pub use window::{window_stride, window_trace, window_traces, OverlapPolicy};

use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// The monitored metrics, in canonical column order.
pub const METRIC_NAMES: [&str; 16] = [
    "SysCallRate",
    "CPU",
    "IdleCPU",
    "I/O buffer",
    "DiskAvl",
    "CacheMiss",
    "Memory",
    "UserMem",
    "PgOutRate",
    "InPktRate",
    "OutPktRate",
    "InByteRate",
    "OutByteRate",
    "AliveProc",
    "ActiveProc",
    "RunTime",
];

/// Behavior classes; the index is the class label.
pub const CLASS_NAMES: [&str; 2] = ["web-server", "sql-server"];

/// One VM's metric stream.
#[derive(Debug, Clone, PartialEq)]
pub struct VmTrace {
    pub vm_id: String,
    pub class_label: usize,
    pub metric_names: Vec<String>,
    /// Rows dropped during ingestion because they contained NaN.
    pub dropped_rows: usize,
    samples: Vec<f64>,
}

impl VmTrace {
    /// `samples` is row-major `(T x M)` with `M = metric_names.len()`.
    pub fn new(
        vm_id: impl Into<String>,
        class_label: usize,
        metric_names: Vec<String>,
        samples: Vec<f64>,
    ) -> Result<Self> {
        let m = metric_names.len();
        if m == 0 || !samples.len().is_multiple_of(m) {
            return Err(Error::Dataset(format!(
                "{} samples do not form rows of {m} metrics",
                samples.len()
            )));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Dataset("trace contains NaN".into()));
        }
        Ok(VmTrace {
            vm_id: vm_id.into(),
            class_label,
            metric_names,
            dropped_rows: 0,
            samples,
        })
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.samples.len() / self.metrics()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn metrics(&self) -> usize {
        self.metric_names.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.metrics();
        &self.samples[t * m..(t + 1) * m]
    }

    pub fn column(&self, metric: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(metric)
            .step_by(self.metrics())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub vm_id: String,
    pub start: usize,
}

/// `W` consecutive timesteps of one trace, stored row-major `(W x M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub values: Vec<f64>,
    pub width: usize,
    pub metrics: usize,
    pub label: usize,
    pub origin: Origin,
}

/// Stacks windows into an `(N, W, M)` tensor plus their labels.
pub fn stack_windows<'a, I>(samples: I) -> Result<(Tensor, Vec<usize>)>
where
    I: IntoIterator<Item = &'a WindowSample>,
{
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    for s in samples {
        match dims {
            None => dims = Some((s.width, s.metrics)),
            Some(d) if d != (s.width, s.metrics) => {
                return Err(Error::shape(
                    "stack_windows",
                    format!("mixed window shapes {d:?} and {:?}", (s.width, s.metrics)),
                ))
            }
            _ => {}
        }
        data.extend_from_slice(&s.values);
        labels.push(s.label);
    }
    let (w, m) = dims.ok_or_else(|| Error::shape("stack_windows", "no samples"))?;
    Ok((Tensor::from_vec(&[labels.len(), w, m], data)?, labels))
}

/// Preprocessing settings shared by training, evaluation and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Windows strictly longer than this many timesteps use 75% overlap.
    pub overlap_threshold: usize,
    pub split_mode: SplitMode,
    pub fractions: SplitFractions,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            overlap_threshold: OverlapPolicy::default().threshold,
            split_mode: SplitMode::Window,
            fractions: SplitFractions::default(),
        }
    }
}

impl DataConfig {
    pub fn overlap_policy(&self) -> OverlapPolicy {
        OverlapPolicy {
            threshold: self.overlap_threshold,
        }
    }
}

/// Windowing, balancing, splitting and normalization in one call.
pub fn prepare_dataset(
    traces: &[VmTrace],
    window: usize,
    config: &DataConfig,
    seed: u64,
) -> Result<DatasetSplit> {
    let overlap = config.overlap_policy().uses_overlap(window);
    let (windows, short) = window_traces(traces, window, overlap)?;
    if short > 0 {
        log::warn!("{short} trace(s) shorter than window {window} contributed no samples");
    }
    split::balance_and_split_with_mode(windows, config.fractions, seed, config.split_mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn trace_rows_and_columns() {
        let t = VmTrace::new("a", 0, names(2), vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.row(1), &[3., 4.]);
        assert_eq!(t.column(1), vec![2., 4., 6.]);
    }

    #[test]
    fn trace_rejects_ragged_and_nan() {
        assert!(VmTrace::new("a", 0, names(2), vec![1., 2., 3.]).is_err());
        assert!(VmTrace::new("a", 0, names(1), vec![f64::NAN]).is_err());
    }

    #[test]
    fn stacking_checks_shapes() {
        let s = |w: usize| WindowSample {
            values: vec![0.0; w * 2],
            width: w,
            metrics: 2,
            label: 1,
            origin: Origin {
                vm_id: "x".into(),
                start: 0,
            },
        };
        let (t, l) = stack_windows(&[s(4), s(4)]).unwrap();
        assert_eq!(t.shape(), &[2, 4, 2]);
        assert_eq!(l, vec![1, 1]);
        assert!(stack_windows(&[s(4), s(8)]).is_err());
        assert!(stack_windows(std::iter::empty()).is_err());
    }

    #[test]
    fn metric_table_has_sixteen_unique_names() {
        let mut v = METRIC_NAMES.to_vec();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 16);
    }
}
