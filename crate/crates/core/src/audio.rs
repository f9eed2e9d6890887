//! Audio decoding, resampling and the amplitude spectrogram.

use std::{f64::consts::PI, fmt, path::Path, sync::Arc};

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use thiserror::Error;

/// Sampling rate every clip is brought to before analysis.
pub const SAMPLE_RATE: u32 = 44100;

/// 80 ms at 44.1 kHz.
pub const DEFAULT_WINDOW_LENGTH: usize = 3528;
/// 20 ms at 44.1 kHz.
pub const DEFAULT_HOP_LENGTH: usize = 882;
/// Window zero-padded to 8192 samples, giving 4097 bins.
pub const DEFAULT_FFT_SIZE: usize = 8192;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read audio file {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported encoding in {path}: {detail} (expected 16- or 24-bit integer PCM)")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("audio is empty")]
    Empty,
    #[error("audio contains non-finite samples")]
    NonFinite,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("clip of {len} samples is shorter than one hop ({hop} samples)")]
    TooShort { len: usize, hop: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrogram contains a negative or non-finite value at ({bin}, {frame})")]
    InvalidSpectrogram { bin: usize, frame: usize },
    #[error("cannot write audio file {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: hound::Error,
    },
}

/// Mono audio with its sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate(sample_rate));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Keeps at most the first `seconds` of audio.
    pub fn truncated(&self, seconds: f64) -> Self {
        let keep = ((seconds * self.sample_rate as f64).round() as usize).min(self.samples.len());
        Self {
            samples: self.samples[..keep].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Band-limited resampling to `target` Hz. Identity when the rates agree.
    pub fn resampled(&self, target: u32) -> Result<Self, AudioError> {
        if target == 0 {
            return Err(AudioError::InvalidSampleRate(target));
        }
        if target == self.sample_rate {
            return Ok(self.clone());
        }
        Ok(Self {
            samples: resample(&self.samples, self.sample_rate, target),
            sample_rate: target,
        })
    }
}

/// Windowed-sinc resampler. The output has `round(len * to / from)` samples.
fn resample(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    const ZERO_CROSSINGS: f64 = 32.0;
    let (from_f, to_f) = (from as f64, to as f64);
    let out_len = ((input.len() as u128 * to as u128 + from as u128 / 2) / from as u128) as usize;
    let ratio = (to_f / from_f).min(1.0);
    // Cutoff as a fraction of the input rate, slightly below Nyquist.
    let cutoff = 0.5 * ratio * 0.97;
    let half_width = ZERO_CROSSINGS / ratio;
    (0..out_len)
        .into_par_iter()
        .map(|j| {
            let center = j as f64 * from_f / to_f;
            let lo = (center - half_width).ceil().max(0.0) as usize;
            let hi = ((center + half_width).floor() as usize).min(input.len().saturating_sub(1));
            let mut acc = 0.0;
            for (k, &x) in input.iter().enumerate().take(hi + 1).skip(lo) {
                let d = center - k as f64;
                let arg = 2.0 * cutoff * d;
                let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
                let window = 0.5 + 0.5 * (PI * d / half_width).cos();
                acc += x * 2.0 * cutoff * sinc * window;
            }
            acc
        })
        .collect()
}

/// Reads a 16- or 24-bit PCM WAV file, averages the channels and resamples
/// to [`SAMPLE_RATE`].
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let reader = hound::WavReader::open(path).map_err(|source| match source {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding {
            path: display.clone(),
            detail: "unsupported WAV layout".into(),
        },
        source => AudioError::Unreadable {
            path: display.clone(),
            source,
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || !matches!(spec.bits_per_sample, 16 | 24) {
        return Err(AudioError::UnsupportedEncoding {
            path: display,
            detail: format!("{:?} with {} bits", spec.sample_format, spec.bits_per_sample),
        });
    }
    let scale = 1.0 / (1u32 << (spec.bits_per_sample - 1)) as f64;
    let channels = spec.channels.max(1) as usize;
    let raw = reader
        .into_samples::<i32>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| AudioError::Unreadable {
            path: display.clone(),
            source,
        })?;
    if raw.len() < channels {
        return Err(AudioError::Empty);
    }
    let mono: Vec<f64> = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 * scale).sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate)?.resampled(SAMPLE_RATE)
}

/// Writes a clip as 16-bit mono PCM, clipping to [-1, 1].
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let err = |source| AudioError::Write {
        path: path.display().to_string(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        writer.write_sample(v).map_err(err)?;
    }
    writer.finalize().map_err(err)
}

/// Analysis window. Only Hann is defined; the tag is persisted in template
/// libraries so training and transcription always agree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum WindowKind {
    #[default]
    Hann,
}

impl WindowKind {
    pub fn tag(self) -> u32 {
        match self {
            WindowKind::Hann => 0,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(WindowKind::Hann),
            _ => None,
        }
    }

    /// Periodic window of `len` samples.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos())
                .collect(),
        }
    }
}

impl fmt::Display for WindowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowKind::Hann => f.write_str("hann"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: DEFAULT_WINDOW_LENGTH,
            hop_length: DEFAULT_HOP_LENGTH,
            fft_size: DEFAULT_FFT_SIZE,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    /// 80 ms windows and 20 ms hops at an arbitrary rate. The FFT is the
    /// power of two at or above twice the window (8192 at 44.1 kHz).
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let window_length = (sample_rate as f64 * 0.080).round() as usize;
        let hop_length = (sample_rate as f64 * 0.020).round() as usize;
        Self {
            window_length,
            hop_length,
            fft_size: (2 * window_length).next_power_of_two(),
            window: WindowKind::Hann,
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.window_length == 0 || self.hop_length == 0 {
            return Err(AudioError::InvalidConfig("window and hop must be positive".into()));
        }
        if self.hop_length > self.window_length {
            return Err(AudioError::InvalidConfig(format!(
                "hop {} exceeds window {}",
                self.hop_length, self.window_length
            )));
        }
        if self.fft_size < self.window_length {
            return Err(AudioError::InvalidConfig(format!(
                "fft size {} below window {}",
                self.fft_size, self.window_length
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for a clip of `len` samples: one per frame centre
    /// `t * hop` in `[0, len]`.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + len / self.hop_length
    }
}

/// STFT parameters together with the sampling rate they apply to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StftMeta {
    pub sample_rate: u32,
    pub config: StftConfig,
}

impl Default for StftMeta {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            config: StftConfig::default(),
        }
    }
}

impl StftMeta {
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.config.fft_size as f64
    }

    pub fn hop_seconds(&self) -> f64 {
        self.config.hop_length as f64 / self.sample_rate as f64
    }
}

impl fmt::Display for StftMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sr={} window={} hop={} fft={} window_fn={}",
            self.sample_rate,
            self.config.window_length,
            self.config.hop_length,
            self.config.fft_size,
            self.config.window
        )
    }
}

/// Nonnegative amplitude spectrogram, `n` bins by `m` frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    values: Array2<f64>,
    meta: StftMeta,
}

impl Spectrogram {
    pub fn new(values: Array2<f64>, meta: StftMeta) -> Result<Self, AudioError> {
        if let Some(((bin, frame), _)) = values.indexed_iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(AudioError::InvalidSpectrogram { bin, frame });
        }
        Ok(Self { values, meta })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn meta(&self) -> &StftMeta {
        &self.meta
    }

    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn bin_hz(&self) -> f64 {
        self.meta.bin_hz()
    }

    pub fn hop_seconds(&self) -> f64 {
        self.meta.hop_seconds()
    }

    /// Start time of frame `t`.
    pub fn frame_time(&self, t: usize) -> f64 {
        (t * self.meta.config.hop_length) as f64 / self.meta.sample_rate as f64
    }
}

/// Magnitude STFT. Frame `t` is centred on sample `t*hop`, covering
/// `[t*hop - window/2, t*hop - window/2 + window)`; samples outside the clip
/// are zero. Magnitudes are divided by the window sum,
/// so a unit-amplitude sinusoid peaks near 0.5.
pub fn compute_spectrogram(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrogram, AudioError> {
    cfg.validate()?;
    if clip.is_empty() {
        return Err(AudioError::Empty);
    }
    if clip.len() < cfg.hop_length {
        return Err(AudioError::TooShort {
            len: clip.len(),
            hop: cfg.hop_length,
        });
    }
    let window = cfg.window.coefficients(cfg.window_length);
    let norm = 1.0 / window.iter().sum::<f64>();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let n = cfg.bins();
    let m = cfg.frame_count(clip.len());
    let samples = clip.samples();

    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map_init(
            || vec![Complex::new(0.0, 0.0); cfg.fft_size],
            |buf, t| {
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                // Window position of the first sample inside the clip.
                let first = (t * cfg.hop_length) as isize - (cfg.window_length / 2) as isize;
                let skip = (-first).max(0) as usize;
                let start = first.max(0) as usize;
                let end = (first + cfg.window_length as isize).clamp(0, samples.len() as isize) as usize;
                if start < end {
                    for (k, (&s, &w)) in samples[start..end].iter().zip(&window[skip..]).enumerate() {
                        buf[skip + k] = Complex::new(s * w, 0.0);
                    }
                }
                fft.process(buf);
                buf[..n].iter().map(|c| c.norm() * norm).collect()
            },
        )
        .collect();

    let mut values = Array2::zeros((n, m));
    for (t, col) in columns.iter().enumerate() {
        for (f, &v) in col.iter().enumerate() {
            values[[f, t]] = v;
        }
    }
    Ok(Spectrogram {
        values,
        meta: StftMeta {
            sample_rate: clip.sample_rate(),
            config: *cfg,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, amp: f64) -> AudioClip {
        let len = (seconds * SAMPLE_RATE as f64) as usize;
        let samples = (0..len)
            .map(|k| amp * (2.0 * PI * freq * k as f64 / SAMPLE_RATE as f64).sin())
            .collect();
        AudioClip::new(samples, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn default_config_bins() {
        let cfg = StftConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.bins(), 4097);
        assert_eq!(StftConfig::for_sample_rate(SAMPLE_RATE), cfg);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = StftConfig {
            hop_length: DEFAULT_WINDOW_LENGTH + 1,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = StftConfig {
            fft_size: 1024,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_clip_gives_zero_spectrogram() {
        let clip = AudioClip::new(vec![0.0; 10_000], SAMPLE_RATE).unwrap();
        let spec = compute_spectrogram(&clip, &StftConfig::default()).unwrap();
        assert!(spec.values().iter().all(|&v| v == 0.0));
        assert_eq!(spec.frames(), 1 + 10_000 / 882);
    }

    #[test]
    fn shorter_than_hop_is_an_error() {
        let clip = AudioClip::new(vec![0.1; 100], SAMPLE_RATE).unwrap();
        assert!(matches!(
            compute_spectrogram(&clip, &StftConfig::default()),
            Err(AudioError::TooShort { len: 100, hop: 882 })
        ));
        let empty = AudioClip::new(vec![], SAMPLE_RATE).unwrap();
        assert!(matches!(
            compute_spectrogram(&empty, &StftConfig::default()),
            Err(AudioError::Empty)
        ));
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(matches!(
            AudioClip::new(vec![0.0, f64::NAN], SAMPLE_RATE),
            Err(AudioError::NonFinite)
        ));
    }

    #[test]
    fn doubling_amplitude_doubles_spectrum() {
        let cfg = StftConfig::default();
        let a = compute_spectrogram(&sine(523.0, 0.5, 0.2), &cfg).unwrap();
        let b = compute_spectrogram(&sine(523.0, 0.5, 0.4), &cfg).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn unit_sine_peaks_near_half() {
        // Bin-centred frequency so the main lobe peak sits on a bin.
        let bin_hz = SAMPLE_RATE as f64 / 8192.0;
        let spec = compute_spectrogram(&sine(80.0 * bin_hz, 0.5, 1.0), &StftConfig::default()).unwrap();
        let peak = spec.values()[[80, 5]];
        assert!((peak - 0.5).abs() < 1e-3, "peak {peak}");
    }

    #[test]
    fn resampling_doubles_length() {
        let clip = AudioClip::new(vec![0.25; 22050 * 2], 22050).unwrap();
        let up = clip.resampled(SAMPLE_RATE).unwrap();
        assert_eq!(up.len(), 88200);
        assert_eq!(up.sample_rate(), SAMPLE_RATE);
        // DC level survives away from the edges.
        assert!((up.samples()[44100] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn resampling_preserves_low_tone() {
        let sr_in = 48000u32;
        let samples: Vec<f64> = (0..sr_in as usize)
            .map(|k| (2.0 * PI * 440.0 * k as f64 / sr_in as f64).sin())
            .collect();
        let clip = AudioClip::new(samples, sr_in).unwrap();
        let out = clip.resampled(SAMPLE_RATE).unwrap();
        assert_eq!(out.len(), 44100);
        for k in 1000..1100 {
            let expected = (2.0 * PI * 440.0 * k as f64 / SAMPLE_RATE as f64).sin();
            assert!((out.samples()[k] - expected).abs() < 2e-3);
        }
    }
}
