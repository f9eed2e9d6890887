//! Plain-text exports of spectrograms and activations.
//!
//! Both formats are one header comment line followed by one row of
//! comma-separated values per frequency bin or per note. Values use the
//! shortest decimal form that parses back to the same `f64`.

use std::{fmt::Write as _, fs, path::Path};

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::{audio::Spectrogram, cnmf::ActivationMatrix};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Format(String),
}

fn rows_to_text(header: &str, values: ArrayView2<'_, f64>) -> String {
    let mut out = String::with_capacity(values.len() * 12 + header.len() + 2);
    out.push_str(header);
    out.push('\n');
    for row in values.rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn spectrogram_csv(spec: &Spectrogram) -> String {
    let header = format!(
        "# n={} m={} bin_hz={} hop_s={}",
        spec.bins(),
        spec.frames(),
        spec.bin_hz(),
        spec.hop_seconds()
    );
    rows_to_text(&header, spec.values().view())
}

pub fn activation_csv(h: &ActivationMatrix, hop_seconds: f64, midi_base: u8) -> String {
    let header = format!(
        "# r={} m={} hop_s={} midi_base={}",
        h.notes(),
        h.frames(),
        hop_seconds,
        midi_base
    );
    rows_to_text(&header, h.values().view())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<(), CsvError> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Activations read back from [`activation_csv`] output.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTable {
    pub activations: ActivationMatrix,
    pub hop_seconds: f64,
    pub midi_base: u8,
}

pub fn parse_activation_csv(text: &str) -> Result<ActivationTable, CsvError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| CsvError::Format("missing '#' header line".into()))?;
    let mut fields = std::collections::HashMap::new();
    for token in header.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| CsvError::Format(format!("bad header token {token:?}")))?;
        fields.insert(k, v);
    }
    let field = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| CsvError::Format(format!("header lacks {k}")))
    };
    let bad = |k: &str| CsvError::Format(format!("bad header value for {k}"));
    let r: usize = field("r")?.parse().map_err(|_| bad("r"))?;
    let m: usize = field("m")?.parse().map_err(|_| bad("m"))?;
    let hop_seconds: f64 = field("hop_s")?.parse().map_err(|_| bad("hop_s"))?;
    let midi_base: u8 = field("midi_base")?.parse().map_err(|_| bad("midi_base"))?;

    let mut values = Vec::with_capacity(r * m);
    let mut rows = 0;
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let before = values.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| CsvError::Format(format!("bad value {cell:?} on row {rows}")))?;
            values.push(v);
        }
        if values.len() - before != m {
            return Err(CsvError::Format(format!(
                "row {rows} has {} values, expected {m}",
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != r {
        return Err(CsvError::Format(format!("found {rows} rows, expected {r}")));
    }
    let array = Array2::from_shape_vec((r, m), values).map_err(|e| CsvError::Format(e.to_string()))?;
    let activations = ActivationMatrix::new(array).map_err(|e| CsvError::Format(e.to_string()))?;
    Ok(ActivationTable {
        activations,
        hop_seconds,
        midi_base,
    })
}

pub fn read_activation_csv(path: impl AsRef<Path>) -> Result<ActivationTable, CsvError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_activation_csv(&text)
}

#[cfg(test)]
mod tests {
    use ndarray::arr2;

    use super::*;
    use crate::audio::StftMeta;

    #[test]
    fn spectrogram_header() {
        let spec = Spectrogram::new(arr2(&[[0.5, 1.0], [0.0, 2.25]]), StftMeta::default()).unwrap();
        let text = spectrogram_csv(&spec);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            format!("# n=2 m=2 bin_hz={} hop_s=0.02", 44100.0 / 8192.0)
        );
        assert_eq!(lines.next().unwrap(), "0.5,1");
        assert_eq!(lines.next().unwrap(), "0,2.25");
    }

    #[test]
    fn activation_roundtrip_is_exact() {
        let h = ActivationMatrix::new(arr2(&[[0.1, 1.0 / 3.0, 0.0], [1e-300, 2.5, 7.0]])).unwrap();
        let text = activation_csv(&h, 0.02, 21);
        assert!(text.starts_with("# r=2 m=3 hop_s=0.02 midi_base=21\n"));
        let back = parse_activation_csv(&text).unwrap();
        assert_eq!(back.activations, h);
        assert_eq!(back.hop_seconds, 0.02);
        assert_eq!(back.midi_base, 21);
    }

    #[test]
    fn malformed_rows_rejected() {
        assert!(parse_activation_csv("# r=1 m=2 hop_s=0.02 midi_base=21\n1,2,3\n").is_err());
        assert!(parse_activation_csv("# r=2 m=1 hop_s=0.02 midi_base=21\n1\n").is_err());
        assert!(parse_activation_csv("r=1 m=1\n1\n").is_err());
        assert!(parse_activation_csv("# r=1 m=1 hop_s=0.02 midi_base=21\n-1\n").is_err());
    }
}
