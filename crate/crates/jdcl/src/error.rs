use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes of the CLI.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] jdcl_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// A media file exists but cannot be decoded.
    #[error("{}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("{}{}: {kind}", path.display(), fmt_row(*row))]
    Manifest {
        path: PathBuf,
        /// 1-based line number in the manifest, header included.
        row: Option<usize>,
        kind: ManifestError,
    },

    #[error("config {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },

    #[error("{0}")]
    Usage(String),

    /// A numerical check failed outside of training.
    #[error("{0}")]
    Numerical(String),

    /// Failure of one pipeline stage; `index` is 1-based.
    #[error("stage {index} (`{name}`): {source}")]
    Stage {
        index: usize,
        name: String,
        source: Box<Error>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestError {
    Empty,
    BadHeader(String),
    MissingFile(PathBuf),
    UnknownLabel(String),
    UnsupportedExtension(String),
    MixedModality,
    Malformed(String),
    Unreadable(String),
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestError::Empty => write!(f, "manifest lists no samples"),
            ManifestError::BadHeader(h) => write!(f, "expected header `path,label`, found `{h}`"),
            ManifestError::MissingFile(p) => write!(f, "missing file {}", p.display()),
            ManifestError::UnknownLabel(l) => write!(f, "unknown label `{l}`"),
            ManifestError::UnsupportedExtension(e) => write!(f, "unsupported file type `{e}`"),
            ManifestError::MixedModality => write!(f, "manifest mixes audio and image files"),
            ManifestError::Malformed(m) => write!(f, "malformed row: {m}"),
            ManifestError::Unreadable(m) => write!(f, "unreadable sample: {m}"),
        }
    }
}

fn fmt_row(row: Option<usize>) -> String {
    row.map(|r| format!(": row {r}")).unwrap_or_default()
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn decode(path: impl Into<PathBuf>, reason: impl fmt::Display) -> Self {
        Error::Decode {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn config(path: impl Into<PathBuf>, reason: impl fmt::Display) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Exit code: 1 for usage and configuration problems, 3 for a numerical
    /// abort during training, 2 for everything rooted in the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config { .. } => EXIT_USAGE,
            Error::Core(jdcl_core::Error::Config { .. }) => EXIT_USAGE,
            Error::Numerical(_) | Error::Core(jdcl_core::Error::NonFinite { .. }) => EXIT_NUMERICAL,
            Error::Stage { source, .. } => source.exit_code(),
            _ => EXIT_DATA,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_NUMERICAL => "numerical",
            _ => "data",
        }
    }
}
