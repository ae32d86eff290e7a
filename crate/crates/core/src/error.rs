use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} is outside [0, 1] or not finite")]
    InvalidProbability(f64),

    #[error("KL divergence undefined: p puts mass {mass} on an outcome where q has none")]
    UndefinedSupport { mass: f64 },

    #[error("caption is empty")]
    EmptyCaption,

    #[error("span [{start}, {end}) is out of bounds for a caption of {len} characters")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("span [{start}, {end}) overlaps or precedes the previous span ending at {prev_end}")]
    OverlappingSpans {
        start: usize,
        end: usize,
        prev_end: usize,
    },

    #[error("span [{start}, {end}) text {text:?} does not match caption slice {slice:?}")]
    SpanTextMismatch {
        start: usize,
        end: usize,
        text: String,
        slice: String,
    },

    #[error("record {id}: field `{field}`: {reason}")]
    Schema {
        id: String,
        field: String,
        reason: String,
    },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("every phrase slot is masked")]
    AllMasked,

    #[error("label list is empty")]
    EmptyLabels,

    #[error("{n} phrases exceed the enumeration limit of {limit}")]
    TooManyPhrases { n: usize, limit: usize },

    #[error("non-finite value in {block}")]
    NonFinite { block: String },

    #[error("training diverged at epoch {epoch}: {block} is not finite")]
    Divergence { epoch: usize, block: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("decode result {result_id} does not belong to instance {instance_id}")]
    MismatchedInstance {
        instance_id: String,
        result_id: String,
    },

    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn schema(id: impl Into<String>, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            id: id.into(),
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for failures caused by the filesystem rather than by the content
    /// of an input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
