use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid size in {op}: {detail}")]
    Size { op: &'static str, detail: String },

    #[error("batch normalization needs at least two values per channel in training mode (got {count})")]
    DegenerateBatch { count: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("parameter {index} has no gradient")]
    MissingGradient { index: usize },

    #[error("gradients already populated; call zero_grad before the next backward pass")]
    GradientsNotReset,

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("weight file {path}: {message}")]
    WeightFile { path: PathBuf, message: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn size(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Size {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by input data or files rather than by the
    /// caller's use of the API.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data { .. }
                | Error::Dataset(_)
                | Error::WeightFile { .. }
                | Error::Io { .. }
                | Error::Config(_)
                | Error::InvalidSpec(_)
        )
    }
}
