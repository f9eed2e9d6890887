//! Note-wise transcription scoring.
//!
//! A reference and an estimated note match when their pitches agree and
//! their onsets differ by at most the tolerance (50 ms by default); offsets
//! are ignored. Counts come from a maximum bipartite matching.

use thiserror::Error;

use crate::{
    cnmf::ActivationMatrix,
    transcriber::{events_from_onsets, local_means, onsets_above, NoteEvent, PeakPickConfig, DEFAULT_HALF_WINDOW},
};

pub const DEFAULT_TOLERANCE: f64 = 0.050;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("no songs to evaluate")]
    NoSongs,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure,
            accuracy: ratio(tp, tp + fp + fn_),
        }
    }
}

/// Result of [`match_notes`]; `pairs` holds `(reference, estimate)` indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// Onset distance test. Distances are rounded to 0.1 ms first, as common
/// evaluation toolkits do, so values like 1.05 - 1.00 sit inside 50 ms.
pub fn onsets_within(a: f64, b: f64, tol: f64) -> bool {
    ((a - b).abs() * 1e4).round() / 1e4 <= tol
}

/// Maximum matching between reference and estimated notes by augmenting
/// paths.
pub fn match_notes(reference: &[NoteEvent], estimate: &[NoteEvent], tol: f64) -> Matching {
    // Candidate references for each estimate, found per pitch with a
    // sorted sweep.
    let mut by_pitch: Vec<Vec<usize>> = vec![Vec::new(); 128];
    for (k, e) in reference.iter().enumerate() {
        by_pitch[e.pitch as usize & 0x7f].push(k);
    }
    for list in &mut by_pitch {
        list.sort_by(|&a, &b| reference[a].onset.total_cmp(&reference[b].onset));
    }
    let adjacency: Vec<Vec<usize>> = estimate
        .iter()
        .map(|e| {
            let list = &by_pitch[e.pitch as usize & 0x7f];
            let start = list.partition_point(|&k| reference[k].onset < e.onset - tol - 1e-3);
            list[start..]
                .iter()
                .take_while(|&&k| reference[k].onset <= e.onset + tol + 1e-3)
                .copied()
                .filter(|&k| reference[k].pitch == e.pitch && onsets_within(reference[k].onset, e.onset, tol))
                .collect()
        })
        .collect();

    let mut ref_owner: Vec<Option<usize>> = vec![None; reference.len()];
    for est in 0..estimate.len() {
        let mut visited = vec![false; reference.len()];
        augment(est, &adjacency, &mut ref_owner, &mut visited);
    }
    let mut pairs: Vec<(usize, usize)> = ref_owner
        .iter()
        .enumerate()
        .filter_map(|(r, e)| e.map(|e| (r, e)))
        .collect();
    pairs.sort_unstable();
    let tp = pairs.len();
    Matching {
        tp,
        fp: estimate.len() - tp,
        fn_: reference.len() - tp,
        pairs,
    }
}

fn augment(est: usize, adjacency: &[Vec<usize>], ref_owner: &mut [Option<usize>], visited: &mut [bool]) -> bool {
    for &r in &adjacency[est] {
        if visited[r] {
            continue;
        }
        visited[r] = true;
        let free = match ref_owner[r] {
            None => true,
            Some(other) => augment(other, adjacency, ref_owner, visited),
        };
        if free {
            ref_owner[r] = Some(est);
            return true;
        }
    }
    false
}

pub fn score(reference: &[NoteEvent], estimate: &[NoteEvent], tol: f64) -> EvalReport {
    let m = match_notes(reference, estimate, tol);
    EvalReport::from_counts(m.tp, m.fp, m.fn_)
}

/// Macro (mean of per-song ratios) and micro (pooled counts) summaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f: f64,
    pub macro_accuracy: f64,
    pub micro: EvalReport,
}

pub fn aggregate(reports: &[EvalReport]) -> Aggregate {
    let k = reports.len().max(1) as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let (tp, fp, fn_) = reports
        .iter()
        .fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
    Aggregate {
        macro_precision: mean(|r| r.precision),
        macro_recall: mean(|r| r.recall),
        macro_f: mean(|r| r.f_measure),
        macro_accuracy: mean(|r| r.accuracy),
        micro: EvalReport::from_counts(tp, fp, fn_),
    }
}

/// The default threshold grid 0.01, 0.02, ..., 0.40.
pub fn default_grid() -> Vec<f64> {
    (1..=40).map(|k| k as f64 / 100.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// One threshold shared by all songs.
    Global,
    /// Each song gets its own best threshold.
    PerSong,
}

/// Activations of one song with its reference notes.
#[derive(Clone, Debug)]
pub struct SongActivations {
    pub name: String,
    pub activations: ActivationMatrix,
    pub hop_seconds: f64,
    pub midi_base: u8,
    pub reference: Vec<NoteEvent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSweepResult {
    pub mode: SweepMode,
    pub grid: Vec<f64>,
    /// `reports[d][s]`: song `s` scored at `grid[d]`.
    pub reports: Vec<Vec<EvalReport>>,
    /// Grid index maximizing the mean F over songs.
    pub best_global: usize,
    /// Grid index maximizing each song's F.
    pub best_per_song: Vec<usize>,
}

impl ThresholdSweepResult {
    pub fn best_global_delta(&self) -> f64 {
        self.grid[self.best_global]
    }

    pub fn best_per_song_deltas(&self) -> Vec<f64> {
        self.best_per_song.iter().map(|&d| self.grid[d]).collect()
    }

    /// Grid index chosen for song `s` under the sweep mode.
    pub fn chosen_index(&self, s: usize) -> usize {
        match self.mode {
            SweepMode::Global => self.best_global,
            SweepMode::PerSong => self.best_per_song[s],
        }
    }

    /// Per-song reports at the chosen thresholds.
    pub fn selected(&self) -> Vec<EvalReport> {
        (0..self.best_per_song.len())
            .map(|s| self.reports[self.chosen_index(s)][s])
            .collect()
    }

    pub fn mean_f(&self) -> f64 {
        aggregate(&self.selected()).macro_f
    }
}

/// Scores every song at every threshold of `grid`. Activations are peak
/// picked once per threshold; ties between thresholds go to the smaller one.
pub fn sweep_thresholds(
    songs: &[SongActivations],
    grid: &[f64],
    tol: f64,
    first_seconds: Option<f64>,
    mode: SweepMode,
) -> Result<ThresholdSweepResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if songs.is_empty() {
        return Err(EvalError::NoSongs);
    }
    let limit = |events: Vec<NoteEvent>| match first_seconds {
        Some(s) => events.into_iter().filter(|e| e.onset < s).collect(),
        None => events,
    };
    let mut reports = vec![Vec::with_capacity(songs.len()); grid.len()];
    for song in songs {
        let reference = limit(song.reference.clone());
        let h = &song.activations;
        let means: Vec<Vec<f64>> = (0..h.notes())
            .map(|q| local_means(h.row(q), DEFAULT_HALF_WINDOW))
            .collect();
        for (d, &delta) in grid.iter().enumerate() {
            let onsets: Vec<Vec<usize>> = (0..h.notes())
                .map(|q| onsets_above(h.row(q), &means[q], delta))
                .collect();
            let cfg = PeakPickConfig::new(delta, song.hop_seconds);
            let estimate = limit(events_from_onsets(&onsets, song.midi_base, &cfg));
            reports[d].push(score(&reference, &estimate, tol));
        }
    }
    let argmax = |values: &mut dyn Iterator<Item = f64>| {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, v) in values.enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        best.0
    };
    let best_global = argmax(&mut reports.iter().map(|per_song| aggregate(per_song).macro_f));
    let best_per_song = (0..songs.len())
        .map(|s| argmax(&mut reports.iter().map(|per_song| per_song[s].f_measure)))
        .collect();
    Ok(ThresholdSweepResult {
        mode,
        grid: grid.to_vec(),
        reports,
        best_global,
        best_per_song,
    })
}
