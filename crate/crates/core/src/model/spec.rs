use crate::tensor::conv_output_len;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Convolution stack on the raw time series.
    DeepConv,
    /// The same stack behind a magnitude-spectrum input block.
    DeepFft,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::DeepConv, Variant::DeepFft];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::DeepConv => "deepconv",
            Variant::DeepFft => "deepfft",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::DeepConv => "DeepConv",
            Variant::DeepFft => "DeepFFT",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deepconv" => Ok(Variant::DeepConv),
            "deepfft" => Ok(Variant::DeepFft),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected deepconv or deepfft)"
            ))),
        }
    }
}

/// Number of conv blocks for a window: `max(log2(W) - 1, 2)`.
pub fn block_count(window: usize) -> Result<usize> {
    if window < 4 {
        return Err(Error::InvalidSpec(format!("window {window} is below the minimum of 4")));
    }
    if !window.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(window));
    }
    let log2 = window.trailing_zeros() as usize;
    Ok((log2 - 1).max(2))
}

/// 32 output channels in the first block, doubling per block up to 128.
pub fn default_channel_plan(blocks: usize) -> Vec<usize> {
    (0..blocks).map(|i| (32usize << i.min(2)).min(128)).collect()
}

/// Architecture description of one classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub window: usize,
    pub metrics: usize,
    pub classes: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub variant: Variant,
    pub channel_plan: Vec<usize>,
}

impl ModelSpec {
    pub const METRICS: usize = 16;
    pub const CLASSES: usize = 2;
    pub const KERNEL: usize = 3;
    pub const STRIDE: usize = 2;
    pub const PADDING: usize = 1;

    /// Standard 16-metric, 2-class spec for `window`.
    pub fn new(window: usize, variant: Variant) -> Result<Self> {
        Self::with_shape(window, Self::METRICS, Self::CLASSES, variant)
    }

    pub fn with_shape(window: usize, metrics: usize, classes: usize, variant: Variant) -> Result<Self> {
        let spec = ModelSpec {
            window,
            metrics,
            classes,
            kernel: Self::KERNEL,
            stride: Self::STRIDE,
            padding: Self::PADDING,
            variant,
            channel_plan: default_channel_plan(block_count(window)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn blocks(&self) -> usize {
        self.channel_plan.len()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = block_count(self.window)?;
        if self.channel_plan.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "window {} needs {expected} blocks, channel plan has {}",
                self.window,
                self.channel_plan.len()
            )));
        }
        if self.metrics == 0 || self.channel_plan.contains(&0) {
            return Err(Error::InvalidSpec("channel counts must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidSpec("kernel and stride must be positive".into()));
        }
        self.sequence_lengths().map(|_| ())
    }

    /// `[W, L_1, ..., L_Nb]` through the conv stack.
    pub fn sequence_lengths(&self) -> Result<Vec<usize>> {
        let mut lens = vec![self.window];
        for b in 0..self.channel_plan.len() {
            let l = *lens.last().expect("non-empty");
            let next = conv_output_len(l, self.kernel, self.stride, self.padding).map_err(|_| {
                Error::InvalidSpec(format!(
                    "sequence collapses before block {}: length {l} with kernel {} padding {}",
                    b + 1,
                    self.kernel,
                    self.padding
                ))
            })?;
            lens.push(next);
        }
        Ok(lens)
    }

    /// Flattened size feeding the fully connected head.
    pub fn head_in_features(&self) -> Result<usize> {
        let last_len = *self.sequence_lengths()?.last().expect("non-empty");
        Ok(last_len * self.channel_plan.last().copied().unwrap_or(self.metrics))
    }
}
