use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown document {0:?}")]
    UnknownDocument(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("embedding provider: {0}")]
    Provider(String),

    #[error("no candidate expansion terms left after filtering ({0})")]
    NoCandidates(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("{}: {source}", path.display())]
    At {
        path: std::path::PathBuf,
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches the file the error came from.
    pub fn at(path: impl Into<std::path::PathBuf>) -> impl FnOnce(Error) -> Error {
        let path = path.into();
        move |source| Error::At {
            path,
            source: Box::new(source),
        }
    }

    /// The error with any file context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
