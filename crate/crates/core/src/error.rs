use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor shapes disagree; `detail` names the offending axes.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// Bad input data. `index` is the offending sample (or row) when known.
    #[error("data error{}: {reason}", fmt_index(.index))]
    Data { index: Option<usize>, reason: String },

    /// A signal or utterance is shorter than the minimum the operation needs.
    #[error("{what} too short: {len} available, {needed} required")]
    TooShort {
        what: &'static str,
        len: usize,
        needed: usize,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    /// A loss or gradient became NaN/Inf during training.
    #[error("non-finite {quantity} at iteration {iteration} (last good iteration: {last_good})")]
    NonFinite {
        quantity: &'static str,
        iteration: usize,
        last_good: usize,
    },

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("architecture mismatch on `{field}`: checkpoint has {found}, stage expects {expected}")]
    ArchMismatch {
        field: &'static str,
        found: String,
        expected: String,
    },
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => alloc::format!(" at index {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn data(index: Option<usize>, reason: impl Into<String>) -> Self {
        Error::Data {
            index,
            reason: reason.into(),
        }
    }
}
