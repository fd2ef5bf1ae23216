use super::{Origin, VmTrace, WindowSample};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Decides when windows overlap: strictly longer than `threshold` timesteps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapPolicy {
    pub threshold: usize,
}

impl Default for OverlapPolicy {
    fn default() -> Self {
        OverlapPolicy { threshold: 64 }
    }
}

impl OverlapPolicy {
    pub fn uses_overlap(&self, window: usize) -> bool {
        window > self.threshold
    }
}

/// `W` without overlap, `W/4` (75% overlap) with it.
pub fn window_stride(window: usize, overlap: bool) -> Result<usize> {
    if window == 0 {
        return Err(Error::Config("window must be positive".into()));
    }
    if !overlap {
        return Ok(window);
    }
    if !window.is_multiple_of(4) {
        return Err(Error::Config(format!(
            "75% overlap needs a window divisible by 4, got {window}"
        )));
    }
    Ok(window / 4)
}

/// Cuts `[k*stride, k*stride + W)` for every `k` whose window ends inside
/// the trace. A trace shorter than `W` yields no windows.
pub fn window_trace(trace: &VmTrace, window: usize, overlap: bool) -> Result<Vec<WindowSample>> {
    let stride = window_stride(window, overlap)?;
    let t = trace.len();
    if t < window {
        return Ok(Vec::new());
    }
    let m = trace.metrics();
    let data = trace.samples();
    Ok((0..=(t - window) / stride)
        .map(|k| {
            let start = k * stride;
            WindowSample {
                values: data[start * m..(start + window) * m].to_vec(),
                width: window,
                metrics: m,
                label: trace.class_label,
                origin: Origin {
                    vm_id: trace.vm_id.clone(),
                    start,
                },
            }
        })
        .collect())
}

/// Windows of every trace, in trace order, plus the number of traces that
/// were too short to contribute.
pub fn window_traces(traces: &[VmTrace], window: usize, overlap: bool) -> Result<(Vec<WindowSample>, usize)> {
    let mut out = Vec::new();
    let mut short = 0;
    for tr in traces {
        let w = window_trace(tr, window, overlap)?;
        if w.is_empty() {
            short += 1;
        }
        out.extend(w);
    }
    Ok((out, short))
}
