//! End-to-end training and transcription on audio clips.

use rayon::prelude::*;

use crate::{
    audio::{compute_spectrogram, AudioClip, Spectrogram, StftConfig, StftMeta},
    cnmf::{train_note_template, transcribe_activations, ActivationMatrix, FitTrace, SolverConfig, TemplateTensor},
    library::{LibraryError, TemplateLibrary, TrainingMeta},
    transcriber::{events_from_onsets, pick_onsets, NoteEvent, PeakPickConfig},
    Error,
};

/// One isolated-note recording.
#[derive(Clone, Debug)]
pub struct NoteClip {
    pub pitch: u8,
    pub clip: AudioClip,
    pub label: String,
}

/// Per-note training outcome, in library order.
#[derive(Clone, Debug)]
pub struct NoteFit {
    pub pitch: u8,
    pub trace: FitTrace,
    pub seconds: f64,
}

/// Trains one template per clip. Clips must cover a contiguous pitch range
/// once each. Notes train independently and in parallel; the result does
/// not depend on scheduling.
pub fn train_library(
    notes: &[NoteClip],
    tau: usize,
    solver: &SolverConfig,
    stft: &StftConfig,
) -> Result<(TemplateLibrary, Vec<NoteFit>), Error> {
    let mut order: Vec<&NoteClip> = notes.iter().collect();
    order.sort_by_key(|n| n.pitch);
    let base = order
        .first()
        .map(|n| n.pitch)
        .ok_or_else(|| LibraryError::InvalidHeader("no training notes".into()))?;
    for (k, note) in order.iter().enumerate() {
        if note.pitch as usize != base as usize + k {
            return Err(LibraryError::InvalidHeader(format!(
                "training pitches must be contiguous and unique; found MIDI {} at position {k} from base {base}",
                note.pitch
            ))
            .into());
        }
    }
    let sample_rate = order[0].clip.sample_rate();

    let fitted: Vec<Result<(ndarray::Array2<f64>, NoteFit), Error>> = order
        .par_iter()
        .map(|note| {
            let started = std::time::Instant::now();
            let spec = compute_spectrogram(&note.clip, stft)?;
            let (template, trace) = train_note_template(spec.values().view(), tau, solver)?;
            Ok((
                template,
                NoteFit {
                    pitch: note.pitch,
                    trace,
                    seconds: started.elapsed().as_secs_f64(),
                },
            ))
        })
        .collect();
    let mut templates = Vec::with_capacity(order.len());
    let mut fits = Vec::with_capacity(order.len());
    for result in fitted {
        let (t, fit) = result?;
        templates.push(t);
        fits.push(fit);
    }
    let tensor = TemplateTensor::from_notes(&templates)?;
    let meta = StftMeta {
        sample_rate,
        config: *stft,
    };
    let training = TrainingMeta {
        iterations: solver.max_iters as u32,
        labels: order.iter().map(|n| n.label.clone()).collect(),
    };
    Ok((TemplateLibrary::new(tensor, base, meta, training)?, fits))
}

/// Everything produced while transcribing one clip.
#[derive(Clone, Debug)]
pub struct Transcription {
    pub spectrogram: Spectrogram,
    pub activations: ActivationMatrix,
    pub trace: FitTrace,
    pub events: Vec<NoteEvent>,
}

/// Spectrogram, activation solve and peak picking under a library.
pub fn transcribe_clip(
    clip: &AudioClip,
    lib: &TemplateLibrary,
    solver: &SolverConfig,
    delta: f64,
) -> Result<Transcription, Error> {
    let spectrogram = compute_spectrogram(clip, &lib.stft.config)?;
    lib.ensure_compatible(spectrogram.meta())?;
    let (activations, trace) = transcribe_activations(spectrogram.values().view(), &lib.tensor, solver)?;
    let pick = PeakPickConfig::new(delta, spectrogram.hop_seconds());
    let events = events_from_onsets(&pick_onsets(&activations, &pick), lib.midi_base, &pick);
    Ok(Transcription {
        spectrogram,
        activations,
        trace,
        events,
    })
}
