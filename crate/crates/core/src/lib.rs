//! Semi-supervised piano transcription with convolutive NMF.
//!
//! One convolutive spectral template is learned per note from an
//! isolated-note recording (rank-one CNMF), then recordings are transcribed
//! by solving the fixed-dictionary KL activation problem and peak picking
//! the activations with an adaptive threshold.
//!
//! The pipeline is split into:
//!
//! * [`audio`]: WAV decoding, resampling and the amplitude STFT.
//! * [`cnmf`]: the convolutive model, KL objective, multiplicative updates,
//!   template training and activation solving.
//! * [`library`]: the binary template library format.
//! * [`transcriber`]: onset peak picking and note event construction.
//! * [`midi`]: standard MIDI writing and reading.
//! * [`eval`]: note-wise scoring and threshold sweeps.
//! * [`synth`]: synthetic notes and planted problem instances.
//! * [`bench`]: the self-verification suite behind `cnmf synthbench`.

pub mod audio;
pub mod bench;
pub mod cnmf;
pub mod csv;
pub mod eval;
pub mod library;
pub mod midi;
pub mod pipeline;
pub mod synth;
pub mod transcriber;

mod error;

pub use audio::{AudioClip, Spectrogram, StftConfig, StftMeta, WindowKind};
pub use cnmf::{ActivationMatrix, FitTrace, SolverConfig, TemplateTensor};
pub use error::Error;
pub use eval::{EvalReport, SweepMode, ThresholdSweepResult};
pub use library::TemplateLibrary;
pub use transcriber::{NoteEvent, PeakPickConfig};

pub type Result<T, E = Error> = std::result::Result<T, E>;
