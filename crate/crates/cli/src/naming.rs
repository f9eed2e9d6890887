//! Pitch labels from isolated-note filenames.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{args::Naming, error::CliError};

/// Pitch of a `<midi>_<anything>.wav` file.
pub fn plain_pitch(file_name: &str) -> Option<u8> {
    let stem = file_name
        .strip_suffix(".wav")
        .or_else(|| file_name.strip_suffix(".WAV"))?;
    let (digits, _) = stem.split_once('_')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&p| p <= 127)
}

/// A parsed MAPS isolated-note name such as
/// `MAPS_ISOL_NO_M_S0_M60_AkPnBcht.wav`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapsNote {
    pub intensity: String,
    pub sustain: bool,
    pub pitch: u8,
}

pub fn maps_note(file_name: &str) -> Option<MapsNote> {
    let stem = file_name.strip_suffix(".wav")?;
    let parts: Vec<&str> = stem.split('_').collect();
    match parts.as_slice() {
        ["MAPS", "ISOL", "NO", intensity, sustain, pitch, ..] => {
            let sustain = match *sustain {
                "S0" => false,
                "S1" => true,
                _ => return None,
            };
            let pitch = pitch.strip_prefix('M')?.parse().ok().filter(|&p: &u8| p <= 127)?;
            Some(MapsNote {
                intensity: intensity.to_string(),
                sustain,
                pitch,
            })
        }
        _ => None,
    }
}

/// Finds one WAV file per pitch in `dir`, sorted by pitch.
///
/// Plain naming rejects WAV files it cannot label. MAPS naming skips files
/// that are not isolated notes or do not match `intensity`.
pub fn note_files(
    dir: &Path,
    naming: Naming,
    intensity: Option<&str>,
    range: Option<(u8, u8)>,
) -> Result<Vec<(u8, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(CliError::io(dir))?;
    let mut found: BTreeMap<u8, Vec<PathBuf>> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(CliError::io(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !name.to_ascii_lowercase().ends_with(".wav") {
            continue;
        }
        let pitch = match naming {
            Naming::Plain => plain_pitch(name).ok_or_else(|| {
                CliError::Data(format!(
                    "cannot read a MIDI pitch from '{name}' (expected <midi>_*.wav)"
                ))
            })?,
            Naming::Maps => match maps_note(name) {
                Some(note) if intensity.is_none_or(|i| note.intensity == i) => note.pitch,
                _ => continue,
            },
        };
        found.entry(pitch).or_default().push(path);
    }

    let duplicates: Vec<String> = found
        .iter()
        .filter(|(_, files)| files.len() > 1)
        .map(|(pitch, files)| {
            let mut names: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
            names.sort();
            format!("duplicate files for MIDI {pitch}: {}", names.join(", "))
        })
        .collect();
    if !duplicates.is_empty() {
        return Err(CliError::Data(duplicates.join("\n")));
    }

    let (lo, hi) = match (range, found.keys().next(), found.keys().next_back()) {
        (Some(r), _, _) => r,
        (None, Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(CliError::Data(format!("no note recordings found in {}", dir.display()))),
    };
    let missing: Vec<String> = (lo..=hi)
        .filter(|p| !found.contains_key(p))
        .map(|p| format!("missing template for MIDI {p}"))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(missing.join("\n")));
    }
    Ok(found
        .into_iter()
        .filter(|(p, _)| (lo..=hi).contains(p))
        .map(|(p, mut files)| (p, files.remove(0)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_names() {
        assert_eq!(plain_pitch("60_c4.wav"), Some(60));
        assert_eq!(plain_pitch("021_a0_soft.wav"), Some(21));
        assert_eq!(plain_pitch("60.wav"), None);
        assert_eq!(plain_pitch("c4_60.wav"), None);
        assert_eq!(plain_pitch("200_x.wav"), None);
        assert_eq!(plain_pitch("60_c4.flac"), None);
    }

    #[test]
    fn maps_names() {
        assert_eq!(
            maps_note("MAPS_ISOL_NO_M_S0_M60_AkPnBcht.wav"),
            Some(MapsNote {
                intensity: "M".into(),
                sustain: false,
                pitch: 60
            })
        );
        assert_eq!(maps_note("MAPS_ISOL_NO_F_S1_M108_ENSTDkCl.wav").unwrap().pitch, 108);
        assert_eq!(maps_note("MAPS_ISOL_RE_M_S0_M60_AkPnBcht.wav"), None);
        assert_eq!(maps_note("MAPS_MUS-alb_se3_AkPnBcht.wav"), None);
    }
}
