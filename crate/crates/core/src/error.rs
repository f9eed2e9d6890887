use thiserror::Error;

use crate::{
    audio::AudioError, cnmf::ModelError, csv::CsvError, eval::EvalError, library::LibraryError, midi::MidiError,
};

/// Any failure raised by the transcription pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Midi(#[from] MidiError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}
