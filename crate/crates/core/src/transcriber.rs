//! Onset peak picking on activations and conversion to note events.

use crate::cnmf::ActivationMatrix;

/// Half-width of the local mean window, giving 21 frames.
pub const DEFAULT_HALF_WINDOW: usize = 10;
/// Note length when no later onset of the same pitch cuts it short.
pub const MAX_NOTE_SECONDS: f64 = 0.5;
pub const DEFAULT_VELOCITY: u8 = 80;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakPickConfig {
    /// Offset added to the local mean, in activation units.
    pub delta: f64,
    pub half_window: usize,
    pub hop_seconds: f64,
}

impl PeakPickConfig {
    pub fn new(delta: f64, hop_seconds: f64) -> Self {
        Self {
            delta,
            half_window: DEFAULT_HALF_WINDOW,
            hop_seconds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: f64,
    pub duration: f64,
    pub velocity: u8,
}

impl NoteEvent {
    pub fn new(pitch: u8, onset: f64, duration: f64) -> Self {
        Self {
            pitch,
            onset,
            duration,
            velocity: DEFAULT_VELOCITY,
        }
    }
}

/// Zero-padded mean over `2 * half_window + 1` frames centred on each frame.
pub fn local_means(row: &[f64], half_window: usize) -> Vec<f64> {
    let width = (2 * half_window + 1) as f64;
    let m = row.len();
    (0..m)
        .map(|t| {
            let lo = t.saturating_sub(half_window);
            let hi = (t + half_window).min(m.saturating_sub(1));
            row[lo..=hi].iter().sum::<f64>() / width
        })
        .collect()
}

/// Frames where `row[t]` exceeds its local mean by more than `delta`.
pub fn onsets_above(row: &[f64], means: &[f64], delta: f64) -> Vec<usize> {
    row.iter()
        .zip(means)
        .enumerate()
        .filter(|(_, (&h, &mean))| h > mean + delta)
        .map(|(t, _)| t)
        .collect()
}

/// Adaptive-threshold onset detection, one frame list per note.
pub fn pick_onsets(h: &ActivationMatrix, cfg: &PeakPickConfig) -> Vec<Vec<usize>> {
    (0..h.notes())
        .map(|q| {
            let row = h.row(q);
            onsets_above(row, &local_means(row, cfg.half_window), cfg.delta)
        })
        .collect()
}

/// Turns per-note onset frames into events sorted by onset, then pitch.
/// Each note lasts until the next onset of the same pitch, at most
/// [`MAX_NOTE_SECONDS`].
pub fn events_from_onsets(onsets: &[Vec<usize>], midi_base: u8, cfg: &PeakPickConfig) -> Vec<NoteEvent> {
    let mut events = Vec::new();
    for (q, frames) in onsets.iter().enumerate() {
        let pitch = midi_base.saturating_add(q as u8);
        let mut sorted = frames.clone();
        sorted.sort_unstable();
        sorted.dedup();
        for (k, &t) in sorted.iter().enumerate() {
            let duration = match sorted.get(k + 1) {
                Some(&next) => ((next - t) as f64 * cfg.hop_seconds).min(MAX_NOTE_SECONDS),
                None => MAX_NOTE_SECONDS,
            };
            events.push(NoteEvent::new(pitch, t as f64 * cfg.hop_seconds, duration));
        }
    }
    sort_events(&mut events);
    events
}

pub fn sort_events(events: &mut [NoteEvent]) {
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
}

/// Events with onset before `seconds`.
pub fn truncate_events(events: &[NoteEvent], seconds: f64) -> Vec<NoteEvent> {
    events.iter().filter(|e| e.onset < seconds).copied().collect()
}
