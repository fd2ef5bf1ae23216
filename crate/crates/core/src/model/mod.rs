//! `DeepConv` / `DeepFFT` network assembly, whole-batch forward/backward and
//! weight persistence.

mod io;
mod network;
mod spec;

pub use io::{
    load, load_with_normalizer, read_header, save, save_with_normalizer, to_bytes, TensorRecord,
    WeightHeader, FORMAT_VERSION, MAGIC,
};
pub use network::{Block, Network};
pub use spec::{block_count, default_channel_plan, ModelSpec, Variant};
