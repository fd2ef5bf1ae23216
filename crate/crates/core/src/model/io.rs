//! Weight container:
//!
//! ```text
//! b"DVMW" | version: u32 LE | header_len: u64 LE | header (UTF-8 JSON) | payload
//! ```
//!
//! The payload is every tensor of [`Network::state_tensors`] as
//! little-endian `f32`, concatenated in header order.

use super::network::Network;
use super::spec::{ModelSpec, Variant};
use crate::data::Normalizer;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"DVMW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub spec: ModelSpec,
    /// `"fft_magnitude"` for DeepFFT, absent for DeepConv.
    pub frontend: Option<String>,
    pub tensors: Vec<TensorRecord>,
    /// Input standardization fitted on the training split, if recorded.
    pub normalizer: Option<Normalizer>,
}

fn header_for(net: &Network, normalizer: Option<&Normalizer>) -> WeightHeader {
    WeightHeader {
        spec: net.spec().clone(),
        frontend: (net.spec().variant == Variant::DeepFft).then(|| "fft_magnitude".to_string()),
        tensors: net
            .state_tensors()
            .into_iter()
            .map(|(name, t)| TensorRecord {
                name,
                shape: t.shape().to_vec(),
                dtype: "f32".into(),
            })
            .collect(),
        normalizer: normalizer.cloned(),
    }
}

/// Serializes `net` (and optionally its input normalizer) to bytes.
pub fn to_bytes(net: &Network, normalizer: Option<&Normalizer>) -> Vec<u8> {
    let header = serde_json::to_vec(&header_for(net, normalizer)).expect("weight header serializes");
    let payload: usize = net.state_tensors().iter().map(|(_, t)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(16 + header.len() + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in net.state_tensors() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    save_with_normalizer(net, None, path)
}

pub fn save_with_normalizer(net: &Network, normalizer: Option<&Normalizer>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net, normalizer)).map_err(|e| Error::io(path, e))
}

/// Splits the container into header and payload, checking magic, version
/// and header length.
fn parse(bytes: &[u8], path: &Path) -> Result<(WeightHeader, usize)> {
    let fail = |message: String| Error::WeightFile {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 {
        return Err(fail(format!("file too short ({} bytes)", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(fail(format!("bad magic bytes {:?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| fail(format!("header length {header_len} exceeds file size")))?;
    let header: WeightHeader =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| fail(format!("invalid header: {e}")))?;
    Ok((header, header_end))
}

/// Reads only the header of a weight file.
pub fn read_header(path: impl AsRef<Path>) -> Result<WeightHeader> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(&bytes, path)?.0)
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    Ok(load_with_normalizer(path)?.0)
}

pub fn load_with_normalizer(path: impl AsRef<Path>) -> Result<(Network, Option<Normalizer>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}

pub(crate) fn from_bytes(bytes: &[u8], path: &Path) -> Result<(Network, Option<Normalizer>)> {
    let fail = |message: String| Error::WeightFile {
        path: path.to_path_buf(),
        message,
    };
    let (header, mut offset) = parse(bytes, path)?;
    let mut net = Network::build(&header.spec, 0).map_err(|e| fail(format!("invalid spec in header: {e}")))?;
    let expected_frontend = (header.spec.variant == Variant::DeepFft).then_some("fft_magnitude");
    if header.frontend.as_deref() != expected_frontend {
        return Err(fail(format!(
            "front-end {:?} does not match variant {}",
            header.frontend, header.spec.variant
        )));
    }
    let skeleton = header_for(&net, None).tensors;
    if header.tensors.len() != skeleton.len() {
        return Err(fail(format!(
            "header lists {} tensors, spec requires {}",
            header.tensors.len(),
            skeleton.len()
        )));
    }
    for (got, want) in header.tensors.iter().zip(&skeleton) {
        if got != want {
            return Err(fail(format!(
                "tensor record {:?} {:?} ({}) disagrees with spec ({:?} {:?})",
                got.name, got.shape, got.dtype, want.name, want.shape
            )));
        }
    }
    let payload: usize = skeleton.iter().map(|r| r.shape.iter().product::<usize>() * 4).sum();
    if bytes.len() - offset != payload {
        return Err(fail(format!(
            "payload is {} bytes, header declares {payload}",
            bytes.len() - offset
        )));
    }
    for t in net.state_tensors_mut() {
        for v in t.data_mut() {
            *v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()) as f64;
            offset += 4;
        }
    }
    if let Some(n) = &header.normalizer {
        if n.mean.len() != header.spec.metrics || n.std.len() != header.spec.metrics {
            return Err(fail("normalizer length does not match metric count".into()));
        }
    }
    Ok((net, header.normalizer))
}
