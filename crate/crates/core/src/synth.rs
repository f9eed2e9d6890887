//! Synthetic material: damped harmonic notes and planted CNMF instances.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    audio::AudioClip,
    cnmf::{ActivationMatrix, TemplateTensor},
    transcriber::NoteEvent,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Equal-tempered frequency of a MIDI pitch, A4 = 440 Hz.
pub fn pitch_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

/// Timbre of a synthetic plucked/struck note: harmonic partials with
/// geometric amplitude rolloff and exponential decay that quickens with the
/// partial index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timbre {
    pub partials: usize,
    pub amplitude: f64,
    /// Amplitude ratio between consecutive partials.
    pub rolloff: f64,
    /// Decay time constant of the fundamental, seconds.
    pub decay: f64,
    pub attack: f64,
}

impl Default for Timbre {
    fn default() -> Self {
        Self {
            partials: 6,
            // A quiet recording level: note activations come out near 0.5,
            // the range the default threshold grid is built for.
            amplitude: 0.02,
            rolloff: 0.6,
            decay: 0.08,
            attack: 0.002,
        }
    }
}

impl Timbre {
    /// Sample `k` of a note of `pitch` started at sample 0.
    fn sample(&self, pitch: u8, k: usize, sample_rate: u32) -> f64 {
        let t = k as f64 / sample_rate as f64;
        let f0 = pitch_hz(pitch);
        let nyquist = sample_rate as f64 / 2.0;
        let ramp = if self.attack > 0.0 {
            (t / self.attack).min(1.0)
        } else {
            1.0
        };
        let mut acc = 0.0;
        let mut amp = self.amplitude;
        for p in 1..=self.partials {
            let f = f0 * p as f64;
            if f >= nyquist {
                break;
            }
            let decay = self.decay / (1.0 + 0.5 * (p - 1) as f64);
            acc += amp * (-t / decay).exp() * (2.0 * PI * f * t).sin();
            amp *= self.rolloff;
        }
        ramp * acc
    }

    /// Length after which the note is below -80 dB.
    pub fn ring_seconds(&self) -> f64 {
        self.decay * 80.0 / 20.0 * std::f64::consts::LN_10
    }
}

/// An isolated note struck after `pre_roll` seconds of silence and rendered
/// for `seconds` more. Recorded single notes always carry some lead-in, and
/// templates trained without it never see the frames that straddle an onset.
pub fn render_note(pitch: u8, pre_roll: f64, seconds: f64, sample_rate: u32, timbre: &Timbre) -> AudioClip {
    let event = NoteEvent::new(pitch, pre_roll, seconds);
    render_sequence(&[event], pre_roll + seconds, sample_rate, timbre)
}

/// Mixes notes into a clip of `seconds`; note durations are ignored, each
/// note rings out naturally.
pub fn render_sequence(events: &[NoteEvent], seconds: f64, sample_rate: u32, timbre: &Timbre) -> AudioClip {
    let len = (seconds * sample_rate as f64).round() as usize;
    let mut samples = vec![0.0; len];
    let ring = (timbre.ring_seconds() * sample_rate as f64).ceil() as usize;
    for e in events {
        let start = (e.onset * sample_rate as f64).round() as usize;
        let end = (start + ring).min(len);
        for (k, s) in samples[start.min(len)..end].iter_mut().enumerate() {
            *s += timbre.sample(e.pitch, k, sample_rate);
        }
    }
    AudioClip::new(samples, sample_rate).expect("finite synthesis")
}

/// `count` events over `pitches` with onsets spread across `seconds`,
/// never closer than `min_gap` for the same pitch. Onsets are sorted.
pub fn random_sequence(pitches: &[u8], count: usize, seconds: f64, min_gap: f64, rng: &mut impl Rng) -> Vec<NoteEvent> {
    let slots = count.max(1);
    let slot = (seconds - 1.0) / slots as f64;
    let mut events: Vec<NoteEvent> = Vec::with_capacity(count);
    let mut last_by_pitch = std::collections::HashMap::new();
    for k in 0..count {
        let onset = 0.25 + k as f64 * slot + rng.gen_range(0.0..slot * 0.5);
        let mut choices = pitches.to_vec();
        choices.shuffle(rng);
        let pitch = choices
            .iter()
            .copied()
            .find(|p| last_by_pitch.get(p).is_none_or(|&last: &f64| onset - last >= min_gap))
            .unwrap_or(choices[0]);
        last_by_pitch.insert(pitch, onset);
        events.push(NoteEvent::new(pitch, onset, 0.5));
    }
    events
}

/// Random templates with unit mass per note. Each template is sparse in
/// frequency so notes are distinguishable.
pub fn random_templates(n: usize, tau: usize, r: usize, rng: &mut impl Rng) -> TemplateTensor {
    let mut values = Array3::zeros((n, tau, r));
    for q in 0..r {
        for f in 0..n {
            if rng.gen_bool(0.3) {
                let level: f64 = rng.gen_range(0.2..1.0);
                for i in 0..tau {
                    values[[f, i, q]] = level * rng.gen_range(0.5..1.0) * (-(i as f64) / tau as f64).exp();
                }
            }
        }
        // Never leave a template empty.
        if (0..n).all(|f| values[[f, 0, q]] == 0.0) {
            values[[q % n, 0, q]] = 1.0;
        }
    }
    let mut w = TemplateTensor::new(values).expect("nonnegative");
    w.normalize();
    w
}

/// Dense positive random matrix with entries in `[lo, hi)`.
pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(lo..hi))
}

pub fn random_tensor(n: usize, tau: usize, r: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Array3<f64> {
    Array3::from_shape_simple_fn((n, tau, r), || rng.gen_range(lo..hi))
}

/// Sparse activations: each note gets impulses with heights in
/// `[lo, hi)`, consecutive impulses of a note more than `gap` frames
/// apart, and nothing in the first or last `margin` frames.
pub fn planted_impulses(
    r: usize,
    m: usize,
    gap: usize,
    margin: usize,
    per_note: usize,
    (lo, hi): (f64, f64),
    rng: &mut impl Rng,
) -> ActivationMatrix {
    let mut h = Array2::zeros((r, m));
    for q in 0..r {
        let mut t = margin + rng.gen_range(0..gap.max(1));
        for _ in 0..per_note {
            if t + margin >= m {
                break;
            }
            h[[q, t]] = rng.gen_range(lo..hi);
            t += gap + 1 + rng.gen_range(0..gap.max(1));
        }
    }
    ActivationMatrix::new(h).expect("nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a4_is_440() {
        assert_eq!(pitch_hz(69), 440.0);
        assert!((pitch_hz(81) - 880.0).abs() < 1e-9);
    }

    #[test]
    fn notes_decay_and_stay_bounded() {
        let timbre = Timbre::default();
        let clip = render_note(60, 0.0, 1.0, 44100, &timbre);
        let peak = clip.samples().iter().fold(0.0f64, |a, &s| a.max(s.abs()));
        // Bounded by the sum of the partial amplitudes 0.02 * (1 - 0.6^6) / 0.4.
        assert!(peak > 0.5 * timbre.amplitude && peak <= 0.0477);
        let tail = clip.samples()[40000..].iter().fold(0.0f64, |a, &s| a.max(s.abs()));
        assert!(tail < 1e-3 * peak);
    }

    #[test]
    fn pre_roll_is_silent() {
        let clip = render_note(64, 0.25, 0.5, 44100, &Timbre::default());
        assert_eq!(clip.len(), 33075);
        assert!(clip.samples()[..11025].iter().all(|&s| s == 0.0));
        assert!(clip.samples()[11030..11100].iter().any(|&s| s != 0.0));
    }

    #[test]
    fn planted_impulses_respect_gap() {
        let mut rng = rng(3);
        let h = planted_impulses(3, 200, 8, 5, 10, (1.0, 2.0), &mut rng);
        for q in 0..3 {
            let hits: Vec<usize> = (0..200).filter(|&t| h.values()[[q, t]] > 0.0).collect();
            assert!(!hits.is_empty());
            assert!(hits.windows(2).all(|w| w[1] - w[0] > 8));
            assert!(hits.iter().all(|t| (5..195).contains(t)));
        }
    }

    #[test]
    fn random_templates_have_unit_mass() {
        let w = random_templates(20, 4, 3, &mut rng(1));
        for s in w.note_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
