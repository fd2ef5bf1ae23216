use super::config::{derive_seed, TrainConfig};
use super::eval::evaluate;
use super::trainer::train;
use crate::data::{prepare_dataset, DataConfig, VmTrace};
use crate::model::Variant;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Column windows of the comparison table.
pub const TABLE_WINDOWS: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

const REFERENCE_FILE: &str = include_str!("../../configs/reference_baselines.json");

const DATA_STREAM: u64 = 0x5eed_da7a;
const MODEL_STREAM: u64 = 0x5eed_0de1;

/// A baseline row quoted from published results; never computed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    pub metric: String,
    /// One entry per [`TABLE_WINDOWS`] column; `None` where no value exists.
    pub values: Vec<Option<f64>>,
}

#[derive(Deserialize)]
struct ReferenceFile {
    windows: Vec<usize>,
    rows: Vec<ReferenceRow>,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    let file: ReferenceFile = serde_json::from_str(REFERENCE_FILE).expect("bundled reference table parses");
    assert_eq!(file.windows, TABLE_WINDOWS);
    file.rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub variant: Variant,
    pub window: usize,
    pub error_percent: f64,
    pub accuracy: f64,
    pub test_samples: usize,
    pub best_epoch: usize,
}

/// Error percentages per (variant, window) next to the reference rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub windows: Vec<usize>,
    pub reference_note: String,
    pub reference: Vec<ReferenceRow>,
    pub entries: Vec<SweepEntry>,
}

impl ComparisonTable {
    pub fn new(entries: Vec<SweepEntry>) -> Self {
        ComparisonTable {
            windows: TABLE_WINDOWS.to_vec(),
            reference_note: "reference, not computed".into(),
            reference: reference_rows(),
            entries,
        }
    }

    /// Variants with at least one computed entry, in canonical order.
    pub fn variants(&self) -> Vec<Variant> {
        Variant::ALL
            .into_iter()
            .filter(|v| self.entries.iter().any(|e| e.variant == *v))
            .collect()
    }

    pub fn entry(&self, variant: Variant, window: usize) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.variant == variant && e.window == window)
    }

    /// Aligned text: one column per window, reference rows marked with `*`.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<(String, Vec<String>)> = Vec::new();
        for r in &self.reference {
            let label = format!("{} {}*", r.method, r.metric);
            let cells = r
                .values
                .iter()
                .map(|v| v.map_or("-".to_string(), |x| format!("{x:.1}")))
                .collect();
            rows.push((label, cells));
        }
        for v in self.variants() {
            let cells = self
                .windows
                .iter()
                .map(|&w| self.entry(v, w).map_or("-".to_string(), |e| format!("{:.2}", e.error_percent)))
                .collect();
            rows.push((v.display_name().to_string(), cells));
        }
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("Method".len());
        let cell_w = 7;
        let mut out = String::new();
        write!(out, "{:<label_w$}", "Method").unwrap();
        for w in &self.windows {
            write!(out, " {:>cell_w$}", w).unwrap();
        }
        out.push('\n');
        out.push_str(&"-".repeat(label_w + (cell_w + 1) * self.windows.len()));
        out.push('\n');
        for (label, cells) in rows {
            write!(out, "{label:<label_w$}").unwrap();
            for c in cells {
                write!(out, " {c:>cell_w$}").unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "Values are test error percentages; * = {}.", self.reference_note).unwrap();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison table serializes")
    }

    /// `variant,window,accuracy` per trained model, for external plotting.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("variant,window,accuracy\n");
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.variant, e.window, e.accuracy).unwrap();
        }
        out
    }
}

/// Trains and evaluates every `(variant, window)` pair. Data splits depend
/// only on `(base.seed, window)`, so both variants see the same windows;
/// model seeds are derived per pair. Pairs run concurrently and results
/// are independent of scheduling.
pub fn sweep(
    traces: &[VmTrace],
    windows: &[usize],
    variants: &[Variant],
    base: &TrainConfig,
    data: &DataConfig,
) -> Result<ComparisonTable> {
    if windows.is_empty() || variants.is_empty() {
        return Err(Error::Config("sweep needs at least one window and one variant".into()));
    }
    let longest = traces.iter().map(VmTrace::len).max().unwrap_or(0);
    if let Some(&w) = windows.iter().find(|&&w| w > longest) {
        return Err(Error::Dataset(format!("window {w} exceeds the longest trace ({longest} steps)")));
    }
    let pairs: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| windows.iter().map(move |&w| (v, w)))
        .collect();
    let entries = crate::par::map_slice(&pairs, |&(variant, window)| -> Result<SweepEntry> {
        let split = prepare_dataset(traces, window, data, derive_seed(base.seed ^ DATA_STREAM, window as u64))?;
        let config = TrainConfig {
            window,
            variant,
            seed: derive_seed(base.seed ^ MODEL_STREAM, (window as u64) << 8 | variant as u64),
            ..base.clone()
        };
        let outcome = train(&split, &config)?;
        let report = evaluate(&outcome.network, &split.test)?;
        log::info!("{variant} W={window}: test error {:.2}%", report.error_percent);
        Ok(SweepEntry {
            variant,
            window,
            error_percent: report.error_percent,
            accuracy: report.accuracy,
            test_samples: split.test.len(),
            best_epoch: outcome.history.best_epoch,
        })
    });
    Ok(ComparisonTable::new(entries.into_iter().collect::<Result<_>>()?))
}
