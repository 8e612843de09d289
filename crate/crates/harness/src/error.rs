use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: configs, flags, dataset files.
    #[error("{0}")]
    Invalid(String),

    /// A run that completed but did not meet its own check.
    #[error("{0}")]
    Failed(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Core(#[from] tenscorr_core::Error),

    #[error(transparent)]
    Mtcn(#[from] tenscorr_mtcn::Error),

    #[error(transparent)]
    Ntcca(#[from] tenscorr_ntcca::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    /// True when the failure is the caller's fault rather than a runtime
    /// fault; the CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Invalid(_) | Error::Parse { .. } => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Core(e) => core_is_validation(e),
            Error::Mtcn(e) => match e {
                tenscorr_mtcn::Error::Core(e) => core_is_validation(e),
                tenscorr_mtcn::Error::Io(e) => missing(e),
                tenscorr_mtcn::Error::NonFinite(_) => false,
                _ => true,
            },
            Error::Ntcca(e) => match e {
                tenscorr_ntcca::Error::Core(e) => core_is_validation(e),
                tenscorr_ntcca::Error::Io(e) => missing(e),
                tenscorr_ntcca::Error::NonFinite(_) => false,
                _ => true,
            },
            Error::Io(e) => missing(e),
            Error::Failed(_) => false,
        }
    }
}

/// A named input that does not exist is the caller's mistake; any other
/// I/O failure is a runtime one.
fn missing(e: &std::io::Error) -> bool {
    e.kind() == std::io::ErrorKind::NotFound
}

fn core_is_validation(e: &tenscorr_core::Error) -> bool {
    use tenscorr_core::Error as E;
    if let E::Io(io) = e {
        return missing(io);
    }
    matches!(
        e,
        E::InvalidArgument(_)
            | E::InvalidShape { .. }
            | E::DimensionMismatch { .. }
            | E::ModeOutOfRange { .. }
            | E::DuplicateMode(_)
            | E::Header { .. }
            | E::SizeLimit { .. }
            | E::Empty(_)
    )
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
