//! Template library persistence.
//!
//! Little-endian layout, version 1:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "CNMFTPL1"
//!      8     4  version (1)
//!     12     4  n (frequency bins)
//!     16     4  tau (template frames)
//!     20     4  r (notes)
//!     24     4  midi_base
//!     28     4  sample_rate
//!     32     4  window_length
//!     36     4  hop_length
//!     40     4  fft_size
//!     44     4  window tag (0 = Hann)
//!     48    16  reserved, zero
//!     64  8nτr  f64 templates, index ((q * tau) + i) * n + f
//!      …        u32 count, then `count` strings (u32 byte length + UTF-8)
//! ```
//!
//! Metadata strings are `key=value` pairs: `iterations=<k>` and one
//! `label.<q>=<source>` per labelled note.

use std::{fs, path::Path};

use ndarray::Array3;
use thiserror::Error;

use crate::{
    audio::{StftConfig, StftMeta, WindowKind},
    cnmf::TemplateTensor,
};

pub const MAGIC: &[u8; 8] = b"CNMFTPL1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;
/// Lowest piano key, A0.
pub const PIANO_MIDI_BASE: u8 = 21;
pub const PIANO_KEYS: usize = 88;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a template library")]
    NotALibrary,
    #[error("unsupported template library version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated template library: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("template value {index} is negative or not finite")]
    InvalidValue { index: usize },
    #[error("invalid library header: {0}")]
    InvalidHeader(String),
    #[error("invalid library metadata: {0}")]
    InvalidMetadata(String),
    #[error("STFT configuration mismatch: library trained with {expected}, input uses {found}")]
    ConfigMismatch { expected: StftMeta, found: StftMeta },
    #[error("template index {q} out of range for {r} notes")]
    IndexOutOfRange { q: usize, r: usize },
    #[error("MIDI pitch {0} not covered by the library")]
    PitchNotCovered(u8),
}

/// Training provenance stored alongside the templates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingMeta {
    pub iterations: u32,
    /// Source label per note; empty strings are not stored.
    pub labels: Vec<String>,
}

/// Trained templates with the analysis settings they depend on.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateLibrary {
    pub tensor: TemplateTensor,
    /// Template `q` is MIDI pitch `midi_base + q`.
    pub midi_base: u8,
    pub stft: StftMeta,
    pub training: TrainingMeta,
}

impl TemplateLibrary {
    pub fn new(
        tensor: TemplateTensor,
        midi_base: u8,
        stft: StftMeta,
        training: TrainingMeta,
    ) -> Result<Self, LibraryError> {
        if midi_base as usize + tensor.notes() > 128 {
            return Err(LibraryError::InvalidHeader(format!(
                "{} notes from MIDI {} exceed the MIDI range",
                tensor.notes(),
                midi_base
            )));
        }
        stft.config
            .validate()
            .map_err(|e| LibraryError::InvalidHeader(e.to_string()))?;
        if tensor.bins() != stft.config.bins() {
            return Err(LibraryError::InvalidHeader(format!(
                "{} template bins but FFT size {} gives {}",
                tensor.bins(),
                stft.config.fft_size,
                stft.config.bins()
            )));
        }
        Ok(Self {
            tensor,
            midi_base,
            stft,
            training,
        })
    }

    pub fn notes(&self) -> usize {
        self.tensor.notes()
    }

    pub fn pitch_of(&self, q: usize) -> Result<u8, LibraryError> {
        pitch_of(q, self.midi_base, self.notes())
    }

    pub fn index_of(&self, pitch: u8) -> Result<usize, LibraryError> {
        let q = pitch
            .checked_sub(self.midi_base)
            .map(usize::from)
            .filter(|&q| q < self.notes());
        q.ok_or(LibraryError::PitchNotCovered(pitch))
    }

    /// Refuses spectrograms computed with other analysis settings.
    pub fn ensure_compatible(&self, found: &StftMeta) -> Result<(), LibraryError> {
        if &self.stft == found {
            Ok(())
        } else {
            Err(LibraryError::ConfigMismatch {
                expected: self.stft,
                found: *found,
            })
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, tau, r) = self.tensor.values().dim();
        let cfg = &self.stft.config;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * tau * r + 64);
        out.extend_from_slice(MAGIC);
        for word in [
            VERSION,
            n as u32,
            tau as u32,
            r as u32,
            self.midi_base as u32,
            self.stft.sample_rate,
            cfg.window_length as u32,
            cfg.hop_length as u32,
            cfg.fft_size as u32,
            cfg.window.tag(),
            0,
            0,
            0,
            0,
        ] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        debug_assert_eq!(out.len(), HEADER_LEN);
        let values = self.tensor.values();
        for q in 0..r {
            for i in 0..tau {
                for f in 0..n {
                    out.extend_from_slice(&values[[f, i, q]].to_le_bytes());
                }
            }
        }
        let strings = self.metadata_strings();
        out.extend_from_slice(&(strings.len() as u32).to_le_bytes());
        for s in &strings {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out
    }

    fn metadata_strings(&self) -> Vec<String> {
        let mut strings = vec![format!("iterations={}", self.training.iterations)];
        for (q, label) in self.training.labels.iter().enumerate() {
            if !label.is_empty() {
                strings.push(format!("label.{q}={label}"));
            }
        }
        strings
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LibraryError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(LibraryError::NotALibrary);
        }
        if bytes.len() < HEADER_LEN {
            return Err(LibraryError::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        let word = |k: usize| {
            let at = 8 + 4 * k;
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
        };
        let version = word(0);
        if version != VERSION {
            return Err(LibraryError::UnsupportedVersion(version));
        }
        let (n, tau, r) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let midi_base = u8::try_from(word(4))
            .map_err(|_| LibraryError::InvalidHeader(format!("midi_base {} out of range", word(4))))?;
        let window = WindowKind::from_tag(word(9))
            .ok_or_else(|| LibraryError::InvalidHeader(format!("unknown window tag {}", word(9))))?;
        let stft = StftMeta {
            sample_rate: word(5),
            config: StftConfig {
                window_length: word(6) as usize,
                hop_length: word(7) as usize,
                fft_size: word(8) as usize,
                window,
            },
        };
        if (10..14).any(|k| word(k) != 0) {
            return Err(LibraryError::InvalidHeader("reserved words must be zero".into()));
        }
        if n == 0 || tau == 0 || r == 0 {
            return Err(LibraryError::InvalidHeader(format!("empty dimensions {n}x{tau}x{r}")));
        }
        stft.config
            .validate()
            .map_err(|e| LibraryError::InvalidHeader(e.to_string()))?;

        let count = n
            .checked_mul(tau)
            .and_then(|v| v.checked_mul(r))
            .ok_or_else(|| LibraryError::InvalidHeader("dimensions overflow".into()))?;
        let payload_end = HEADER_LEN + 8 * count;
        if bytes.len() < payload_end + 4 {
            return Err(LibraryError::Truncated {
                expected: payload_end + 4,
                actual: bytes.len(),
            });
        }
        let mut values = Array3::zeros((n, tau, r));
        for (k, chunk) in bytes[HEADER_LEN..payload_end].chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LibraryError::InvalidValue { index: k });
            }
            let (f, rest) = (k % n, k / n);
            values[[f, rest % tau, rest / tau]] = v;
        }

        let strings = read_strings(&bytes[payload_end..], payload_end)?;
        let training = parse_metadata(&strings, r)?;
        let tensor = TemplateTensor::new(values).map_err(|e| LibraryError::InvalidHeader(e.to_string()))?;
        Self::new(tensor, midi_base, stft, training)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LibraryError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| LibraryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LibraryError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| LibraryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// MIDI pitch of template `q` in a library of `r` notes starting at `midi_base`.
pub fn pitch_of(q: usize, midi_base: u8, r: usize) -> Result<u8, LibraryError> {
    if q >= r {
        return Err(LibraryError::IndexOutOfRange { q, r });
    }
    u8::try_from(midi_base as usize + q).map_err(|_| LibraryError::IndexOutOfRange { q, r })
}

fn read_strings(block: &[u8], offset: usize) -> Result<Vec<String>, LibraryError> {
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8], LibraryError> {
        if block.len() < pos + len {
            return Err(LibraryError::Truncated {
                expected: offset + pos + len,
                actual: offset + block.len(),
            });
        }
        let out = &block[pos..pos + len];
        pos += len;
        Ok(out)
    };
    let count = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    let mut strings = Vec::new();
    for _ in 0..count {
        let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let raw = take(len)?;
        let s = std::str::from_utf8(raw).map_err(|e| LibraryError::InvalidMetadata(e.to_string()))?;
        strings.push(s.to_owned());
    }
    if pos != block.len() {
        return Err(LibraryError::InvalidMetadata(format!(
            "{} trailing bytes after metadata",
            block.len() - pos
        )));
    }
    Ok(strings)
}

fn parse_metadata(strings: &[String], r: usize) -> Result<TrainingMeta, LibraryError> {
    let mut meta = TrainingMeta::default();
    let mut labels = vec![String::new(); r];
    for s in strings {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| LibraryError::InvalidMetadata(format!("entry without '=': {s:?}")))?;
        if key == "iterations" {
            meta.iterations = value
                .parse()
                .map_err(|_| LibraryError::InvalidMetadata(format!("bad iteration count {value:?}")))?;
        } else if let Some(q) = key.strip_prefix("label.") {
            let q: usize = q
                .parse()
                .ok()
                .filter(|&q| q < r)
                .ok_or_else(|| LibraryError::InvalidMetadata(format!("bad label key {key:?}")))?;
            labels[q] = value.to_owned();
        }
    }
    if labels.iter().any(|l| !l.is_empty()) {
        meta.labels = labels;
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use ndarray::Array;

    use super::*;

    fn small_library() -> TemplateLibrary {
        let stft = StftMeta {
            sample_rate: 16000,
            config: StftConfig {
                window_length: 64,
                hop_length: 16,
                fft_size: 64,
                window: WindowKind::Hann,
            },
        };
        let tensor = TemplateTensor::new(Array::from_shape_fn((33, 3, 4), |(f, i, q)| {
            (f * 31 + i * 7 + q) as f64 * 0.125
        }))
        .unwrap();
        let training = TrainingMeta {
            iterations: 500,
            labels: vec!["a.wav".into(), "".into(), "ISOL/NO, M".into(), "d".into()],
        };
        TemplateLibrary::new(tensor, 60, stft, training).unwrap()
    }

    #[test]
    fn roundtrip_is_identity() {
        let lib = small_library();
        let back = TemplateLibrary::from_bytes(&lib.to_bytes()).unwrap();
        assert_eq!(back, lib);
    }

    #[test]
    fn payload_layout_is_q_major() {
        let lib = small_library();
        let bytes = lib.to_bytes();
        let (n, tau) = (33, 3);
        let (f, i, q) = (5, 2, 3);
        let at = HEADER_LEN + 8 * ((q * tau + i) * n + f);
        let v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        assert_eq!(v, lib.tensor.values()[[f, i, q]]);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut bytes = small_library().to_bytes();
        bytes[0] = b'X';
        let err = TemplateLibrary::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, LibraryError::NotALibrary));
        assert_eq!(err.to_string(), "not a template library");
    }

    #[test]
    fn truncation_reports_sizes() {
        let bytes = small_library().to_bytes();
        let cut = &bytes[..HEADER_LEN + 100];
        match TemplateLibrary::from_bytes(cut) {
            Err(LibraryError::Truncated { expected, actual }) => {
                assert_eq!(expected, HEADER_LEN + 8 * 33 * 3 * 4 + 4);
                assert_eq!(actual, HEADER_LEN + 100);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            TemplateLibrary::from_bytes(&bytes[..bytes.len() - 2]),
            Err(LibraryError::Truncated { .. })
        ));
    }

    #[test]
    fn version_two_rejected() {
        let mut bytes = small_library().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            TemplateLibrary::from_bytes(&bytes),
            Err(LibraryError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn negative_value_rejected() {
        let mut bytes = small_library().to_bytes();
        bytes[HEADER_LEN + 16..HEADER_LEN + 24].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(
            TemplateLibrary::from_bytes(&bytes),
            Err(LibraryError::InvalidValue { index: 2 })
        ));
    }

    #[test]
    fn pitch_mapping() {
        assert_eq!(pitch_of(0, 21, 88).unwrap(), 21);
        assert_eq!(pitch_of(87, 21, 88).unwrap(), 108);
        assert!(matches!(
            pitch_of(88, 21, 88),
            Err(LibraryError::IndexOutOfRange { q: 88, r: 88 })
        ));
        let lib = small_library();
        assert_eq!(lib.index_of(62).unwrap(), 2);
        assert!(lib.index_of(59).is_err());
        assert!(lib.index_of(64).is_err());
    }

    #[test]
    fn stft_mismatch_refused() {
        let lib = small_library();
        lib.ensure_compatible(&lib.stft).unwrap();
        let mut other = lib.stft;
        other.config.hop_length = 32;
        assert!(matches!(
            lib.ensure_compatible(&other),
            Err(LibraryError::ConfigMismatch { .. })
        ));
    }
}
