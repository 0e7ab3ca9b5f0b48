use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor or raster shapes do not line up.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// An operation or config parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a domain constraint (class index, palette color, ...).
    #[error("invalid data: {0}")]
    Data(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    /// A stored weight does not match the shape the config implies.
    #[error("weight shape mismatch for `{name}`: {detail}")]
    ShapeMismatch { name: String, detail: String },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("archive truncated: header declares {declared} records, only {read} readable")]
    Truncated { declared: u32, read: u32 },

    #[error("archive record count mismatch: header declares {declared}, file has trailing data")]
    CountMismatch { declared: u32 },

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),

    /// Wraps a failure with the pipeline stage it came from.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }


    pub(crate) fn dim(op: &'static str, detail: String) -> Self {
        Error::Dimension { op, detail }
    }
}
