use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SUITE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cnmf_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Inputs that are readable but unusable together.
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Usage(String),
    #[error("synthbench: {failed} of {total} checks failed")]
    SuiteFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::SuiteFailed { .. } => EXIT_SUITE,
            _ => EXIT_DATA,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

macro_rules! via_core {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

via_core!(
    cnmf_core::audio::AudioError,
    cnmf_core::cnmf::ModelError,
    cnmf_core::library::LibraryError,
    cnmf_core::midi::MidiError,
    cnmf_core::eval::EvalError,
    cnmf_core::csv::CsvError
);
