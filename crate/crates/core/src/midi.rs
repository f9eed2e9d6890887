//! Standard MIDI output for transcriptions and note extraction from
//! reference MIDI files.
//!
//! Written files are format 0 with one track, 480 ticks per quarter note at
//! 120 BPM, so one second is 960 ticks.

use std::{collections::HashMap, fs, path::Path};

use midly::{MetaMessage, MidiMessage, Smf, Timing, TrackEventKind};
use thiserror::Error;

use crate::transcriber::{sort_events, NoteEvent};

pub const TICKS_PER_QUARTER: u16 = 480;
pub const BPM: f64 = 120.0;
const MICROS_PER_QUARTER: u32 = 500_000;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse MIDI {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("invalid note event: {0}")]
    InvalidEvent(String),
}

pub fn seconds_to_ticks(seconds: f64) -> u32 {
    (seconds * TICKS_PER_QUARTER as f64 * BPM / 60.0).round() as u32
}

fn push_varlen(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 5];
    let mut len = 0;
    loop {
        stack[len] = (value & 0x7f) as u8;
        len += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for k in (0..len).rev() {
        out.push(if k > 0 { stack[k] | 0x80 } else { stack[k] });
    }
}

/// Encodes events as a format-0 standard MIDI file.
pub fn encode_midi(events: &[NoteEvent]) -> Result<Vec<u8>, MidiError> {
    // (tick, is_on, pitch, velocity); note-offs sort before note-ons.
    let mut messages: Vec<(u32, bool, u8, u8)> = Vec::with_capacity(2 * events.len());
    for e in events {
        if !(e.onset >= 0.0 && e.onset.is_finite()) || !(e.duration > 0.0 && e.duration.is_finite()) {
            return Err(MidiError::InvalidEvent(format!("{e:?}")));
        }
        if e.pitch > 127 || e.velocity > 127 {
            return Err(MidiError::InvalidEvent(format!("{e:?}")));
        }
        let on = seconds_to_ticks(e.onset);
        let off = seconds_to_ticks(e.onset + e.duration).max(on + 1);
        messages.push((on, true, e.pitch, e.velocity));
        messages.push((off, false, e.pitch, 0));
    }
    messages.sort_by_key(|&(tick, is_on, pitch, _)| (tick, is_on, pitch));

    let mut track = Vec::new();
    // Tempo meta event at tick 0.
    track.extend_from_slice(&[0x00, 0xff, 0x51, 0x03]);
    track.extend_from_slice(&MICROS_PER_QUARTER.to_be_bytes()[1..]);
    let mut last = 0u32;
    for (tick, is_on, pitch, velocity) in messages {
        push_varlen(&mut track, tick - last);
        last = tick;
        track.extend_from_slice(&[if is_on { 0x90 } else { 0x80 }, pitch, velocity]);
    }
    track.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

pub fn write_midi(events: &[NoteEvent], path: impl AsRef<Path>) -> Result<(), MidiError> {
    let path = path.as_ref();
    let bytes = encode_midi(events)?;
    fs::write(path, bytes).map_err(|source| MidiError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_midi(path: impl AsRef<Path>) -> Result<Vec<NoteEvent>, MidiError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MidiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_midi(&bytes).map_err(|detail| MidiError::Parse {
        path: path.display().to_string(),
        detail,
    })
}

/// Extracts notes from any standard MIDI file, honouring tempo changes.
/// A note-on with velocity 0 counts as a note-off. Notes left open run to
/// the last event of the file.
pub fn decode_midi(bytes: &[u8]) -> Result<Vec<NoteEvent>, String> {
    let smf = Smf::parse(bytes).map_err(|e| e.to_string())?;

    // (absolute tick, track, order within track, kind)
    let mut timeline = Vec::new();
    for (track_idx, track) in smf.tracks.iter().enumerate() {
        let mut tick = 0u64;
        for (k, event) in track.iter().enumerate() {
            tick += u64::from(event.delta.as_int());
            timeline.push((tick, track_idx, k, event.kind));
        }
    }
    timeline.sort_by_key(|&(tick, track, k, _)| (tick, track, k));

    let to_seconds: Box<dyn Fn(u64, f64, u64, f64) -> f64> = match smf.header.timing {
        Timing::Metrical(ppq) => {
            let ppq = f64::from(ppq.as_int().max(1));
            Box::new(move |tick, tempo_us, anchor_tick, anchor_s| {
                anchor_s + (tick - anchor_tick) as f64 * tempo_us / 1e6 / ppq
            })
        }
        Timing::Timecode(fps, subframe) => {
            let per_second = f64::from(fps.as_f32()) * f64::from(subframe.max(1));
            Box::new(move |tick, _, _, _| tick as f64 / per_second)
        }
    };

    let mut tempo_us = f64::from(MICROS_PER_QUARTER);
    let (mut anchor_tick, mut anchor_s) = (0u64, 0.0f64);
    let mut open: HashMap<(u8, u8), Vec<(f64, u8)>> = HashMap::new();
    let mut notes = Vec::new();
    let mut end_s = 0.0f64;
    for (tick, _, _, kind) in timeline {
        let now = to_seconds(tick, tempo_us, anchor_tick, anchor_s);
        end_s = end_s.max(now);
        match kind {
            TrackEventKind::Meta(MetaMessage::Tempo(t)) => {
                anchor_s = now;
                anchor_tick = tick;
                tempo_us = f64::from(t.as_int());
            }
            TrackEventKind::Midi { channel, message } => {
                let channel = channel.as_int();
                let (key, on_velocity) = match message {
                    MidiMessage::NoteOn { key, vel } => (key.as_int(), vel.as_int()),
                    MidiMessage::NoteOff { key, .. } => (key.as_int(), 0),
                    _ => continue,
                };
                let slot = open.entry((channel, key)).or_default();
                if on_velocity > 0 {
                    slot.push((now, on_velocity));
                } else if !slot.is_empty() {
                    let (start, velocity) = slot.remove(0);
                    notes.push(NoteEvent {
                        pitch: key,
                        onset: start,
                        duration: now - start,
                        velocity,
                    });
                }
            }
            _ => {}
        }
    }
    for ((_, key), starts) in open {
        for (start, velocity) in starts {
            notes.push(NoteEvent {
                pitch: key,
                onset: start,
                duration: end_s - start,
                velocity,
            });
        }
    }
    sort_events(&mut notes);
    Ok(notes)
}
