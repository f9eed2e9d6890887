//! The demo's state machine, free of any JavaScript types so it can be
//! exercised natively.

use cnmf_core::{
    audio::compute_spectrogram,
    cnmf::{train_note_template, transcribe_activations},
    eval::score,
    library::TrainingMeta,
    synth::{random_sequence, render_note, render_sequence, rng, Timbre},
    transcriber::{events_from_onsets, local_means, pick_onsets},
    ActivationMatrix, NoteEvent, PeakPickConfig, SolverConfig, Spectrogram, StftConfig, StftMeta, TemplateLibrary,
    TemplateTensor, WindowKind,
};
use serde::Serialize;
use thiserror::Error;

/// Low enough that a browser trains a handful of notes in seconds.
pub const SAMPLE_RATE: u32 = 8000;
pub const TAU: usize = 10;
/// Silence before each training note, so templates see the attack arrive.
pub const PRE_ROLL: f64 = 0.25;
pub const NOTE_SECONDS: f64 = 1.0;
pub const ONSET_TOLERANCE: f64 = 0.05;
/// Highest frequency drawn in the images.
const SHOWN_HZ: f64 = 1600.0;
/// Dynamic range of the images.
const FLOOR_DB: f64 = -60.0;

/// 80 ms Hann windows and 20 ms hops, as at full rate, with the FFT
/// trimmed to the next power of two above the window.
pub fn stft() -> StftConfig {
    StftConfig {
        window_length: 640,
        hop_length: 160,
        fft_size: 1024,
        window: WindowKind::Hann,
    }
}

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Core(#[from] cnmf_core::Error),
    #[error("train templates first")]
    NotTrained,
    #[error("transcribe a song first")]
    NoSong,
    #[error("{0}")]
    Invalid(String),
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for DemoError {
            fn from(e: $t) -> Self {
                DemoError::Core(e.into())
            }
        }
    )*};
}
via_core!(
    cnmf_core::audio::AudioError,
    cnmf_core::cnmf::ModelError,
    cnmf_core::library::LibraryError
);

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub pitch: u8,
    pub onset: f64,
    pub duration: f64,
}

impl From<&NoteEvent> for Event {
    fn from(e: &NoteEvent) -> Self {
        Self {
            pitch: e.pitch,
            onset: e.onset,
            duration: e.duration,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainView {
    pub pitches: Vec<u8>,
    pub tau: usize,
    pub bin_hz: f64,
    /// Per note, `shown bins x tau` in bin-major order, scaled to [0, 1].
    pub templates: Vec<Vec<f32>>,
    pub shown_bins: usize,
    /// KL cost after every training iteration, per note.
    pub traces: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SongView {
    pub seconds: f64,
    pub hop_seconds: f64,
    pub pitches: Vec<u8>,
    pub reference: Vec<Event>,
    /// Frame-major, `shown_bins` values per frame, scaled to [0, 1].
    pub spectrogram: Vec<Vec<f32>>,
    pub shown_bins: usize,
    pub activations: Vec<Vec<f64>>,
    pub final_cost: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PickView {
    pub delta: f64,
    /// Local mean each activation row is compared against.
    pub means: Vec<Vec<f64>>,
    pub onsets: Vec<Vec<usize>>,
    pub estimate: Vec<Event>,
    pub scores: Scores,
}

struct Song {
    reference: Vec<NoteEvent>,
    activations: ActivationMatrix,
    hop_seconds: f64,
}

#[derive(Default)]
pub struct Session {
    library: Option<TemplateLibrary>,
    song: Option<Song>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Renders and trains one template per pitch in `lo..=hi`. Replaces any
    /// earlier library and forgets the current song.
    pub fn train(&mut self, lo: u8, hi: u8, iters: usize) -> Result<TrainView, DemoError> {
        if lo > hi || hi > 108 || lo < 21 {
            return Err(DemoError::Invalid(format!(
                "pitch range {lo}-{hi} must lie within 21-108"
            )));
        }
        if hi - lo >= 12 {
            return Err(DemoError::Invalid("train at most 12 notes".into()));
        }
        if iters == 0 {
            return Err(DemoError::Invalid("iterations must be at least 1".into()));
        }
        let cfg = stft();
        let solver = SolverConfig::training().with_iters(iters);
        let timbre = Timbre::default();
        let mut templates = Vec::new();
        let mut traces = Vec::new();
        for pitch in lo..=hi {
            let clip = render_note(pitch, PRE_ROLL, NOTE_SECONDS, SAMPLE_RATE, &timbre);
            let spec = compute_spectrogram(&clip, &cfg)?;
            let (template, trace) = train_note_template(spec.values().view(), TAU, &solver)?;
            templates.push(template);
            traces.push(trace.cost_per_iteration);
        }
        let tensor = TemplateTensor::from_notes(&templates)?;
        let meta = StftMeta {
            sample_rate: SAMPLE_RATE,
            config: cfg,
        };
        let training = TrainingMeta {
            iterations: iters as u32,
            labels: vec![String::new(); templates.len()],
        };
        let library = TemplateLibrary::new(tensor, lo, meta, training)?;

        let shown = shown_bins(meta.bin_hz(), cfg.bins());
        let view = TrainView {
            pitches: (lo..=hi).collect(),
            tau: TAU,
            bin_hz: meta.bin_hz(),
            templates: templates
                .iter()
                .map(|t| to_image(t.rows().into_iter().take(shown).flatten().copied()))
                .collect(),
            shown_bins: shown,
            traces,
        };
        self.library = Some(library);
        self.song = None;
        Ok(view)
    }

    /// Synthesizes `notes` random notes over `seconds` from the trained
    /// pitches and solves for their activations.
    pub fn transcribe(&mut self, seed: u64, notes: usize, seconds: f64) -> Result<SongView, DemoError> {
        let lib = self.library.as_ref().ok_or(DemoError::NotTrained)?;
        if !(2.0..=20.0).contains(&seconds) {
            return Err(DemoError::Invalid("song length must be 2 to 20 seconds".into()));
        }
        if notes == 0 || notes > 64 {
            return Err(DemoError::Invalid("note count must be 1 to 64".into()));
        }
        let pitches: Vec<u8> = (0..lib.notes()).map(|q| lib.midi_base + q as u8).collect();
        let hop = lib.stft.hop_seconds();
        let mut reference = random_sequence(&pitches, notes, seconds, 0.3, &mut rng(seed));
        // Onsets share the training notes' position within a hop, so each
        // note fires on a single frame and the threshold is the only knob.
        let phase = PRE_ROLL % hop;
        for e in &mut reference {
            e.onset = ((e.onset - phase) / hop).round() * hop + phase;
        }
        let clip = render_sequence(&reference, seconds, SAMPLE_RATE, &Timbre::default());
        let spec = compute_spectrogram(&clip, &lib.stft.config)?;
        let (activations, trace) =
            transcribe_activations(spec.values().view(), &lib.tensor, &SolverConfig::transcription())?;

        let view = SongView {
            seconds,
            hop_seconds: hop,
            pitches,
            reference: reference.iter().map(Event::from).collect(),
            spectrogram: spectrogram_image(&spec),
            shown_bins: shown_bins(spec.bin_hz(), spec.bins()),
            activations: activations.values().rows().into_iter().map(|r| r.to_vec()).collect(),
            final_cost: trace.final_cost(),
        };
        self.song = Some(Song {
            reference,
            activations,
            hop_seconds: hop,
        });
        Ok(view)
    }

    /// Peak picks the current activations at `delta` and scores the result.
    pub fn pick(&self, delta: f64) -> Result<PickView, DemoError> {
        let lib = self.library.as_ref().ok_or(DemoError::NotTrained)?;
        let song = self.song.as_ref().ok_or(DemoError::NoSong)?;
        if !delta.is_finite() || delta < 0.0 {
            return Err(DemoError::Invalid(format!(
                "threshold {delta} must be a nonnegative number"
            )));
        }
        let cfg = PeakPickConfig::new(delta, song.hop_seconds);
        let h = &song.activations;
        let means = (0..h.notes()).map(|q| local_means(h.row(q), cfg.half_window)).collect();
        let onsets = pick_onsets(h, &cfg);
        let estimate = events_from_onsets(&onsets, lib.midi_base, &cfg);
        let r = score(&song.reference, &estimate, ONSET_TOLERANCE);
        Ok(PickView {
            delta,
            means,
            onsets,
            estimate: estimate.iter().map(Event::from).collect(),
            scores: Scores {
                precision: r.precision,
                recall: r.recall,
                f_measure: r.f_measure,
                accuracy: r.accuracy,
                tp: r.tp,
                fp: r.fp,
                fn_: r.fn_,
            },
        })
    }
}

fn shown_bins(bin_hz: f64, bins: usize) -> usize {
    ((SHOWN_HZ / bin_hz).ceil() as usize).min(bins)
}

/// Decibels relative to the loudest value, mapped from [FLOOR_DB, 0] to [0, 1].
fn to_image(values: impl Iterator<Item = f64> + Clone) -> Vec<f32> {
    let peak = values.clone().fold(0.0, f64::max);
    values
        .map(|x| {
            if peak <= 0.0 || x <= 0.0 {
                return 0.0;
            }
            let db = 20.0 * (x / peak).log10();
            (1.0 - db / FLOOR_DB).clamp(0.0, 1.0) as f32
        })
        .collect()
}

fn spectrogram_image(spec: &Spectrogram) -> Vec<Vec<f32>> {
    let shown = shown_bins(spec.bin_hz(), spec.bins());
    let flat = to_image(
        spec.values()
            .columns()
            .into_iter()
            .flat_map(|c| c.into_iter().take(shown).copied()),
    );
    flat.chunks(shown).map(<[f32]>::to_vec).collect()
}
