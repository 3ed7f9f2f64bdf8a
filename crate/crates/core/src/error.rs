use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty loss mask")]
    EmptyMask,

    #[error("target row {row} not normalized (sums to {sum})")]
    Normalization { row: usize, sum: f64 },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("loss is detached from any recorded graph")]
    DetachedLoss,

    #[error("compute graph already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{key} out of range: {msg}")]
    Range { key: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate node id {0}")]
    DuplicateNode(usize),

    #[error("unknown node id {id} in edges file (line {line})")]
    UnknownNode { id: usize, line: usize },

    #[error("train node {0} has no label")]
    MissingLabel(usize),

    #[error("missing pseudo-label for unlabeled node {0}")]
    MissingPseudoLabel(usize),

    #[error("vocabulary too small for class blocks")]
    VocabTooSmall,

    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: bad magic")]
    BadMagic,

    #[error("checkpoint: unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint: truncated payload while reading {0}")]
    Truncated(String),

    #[error("checkpoint: unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("checkpoint: missing entry `{0}`")]
    MissingEntry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyMask => "empty_mask",
            Error::Normalization { .. } => "normalization",
            Error::NonScalarLoss(_) | Error::DetachedLoss | Error::GraphConsumed => "autodiff",
            Error::MissingGrad(_) => "missing_grad",
            Error::Invalid(_) => "invalid",
            Error::Range { .. } => "range",
            Error::Parse { .. } => "parse",
            Error::DuplicateNode(_) | Error::UnknownNode { .. } | Error::MissingLabel(_) => "data",
            Error::MissingPseudoLabel(_) => "pseudo_label",
            Error::VocabTooSmall => "synth",
            Error::EmptySplit(_) => "split",
            Error::Config(_) => "config",
            Error::BadMagic
            | Error::Version { .. }
            | Error::Truncated(_)
            | Error::UnknownDtype(_)
            | Error::MissingEntry(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
