//! Self-verification suite. Every check compares the toolkit against an
//! oracle written out longhand here, on seeded synthetic instances, and
//! reports the measured error next to the tolerance it is held to.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use crate::{
    audio::{compute_spectrogram, AudioClip, StftConfig, SAMPLE_RATE},
    cnmf::{
        cnmf_apply, fit_cnmf, solve_activations, train_note_template, transcribe_activations, update_h, update_w,
        ActivationMatrix, SolverConfig, TemplateTensor, DEFAULT_EPSILON,
    },
    eval::{default_grid, match_notes, sweep_thresholds, SongActivations, SweepMode},
    pipeline::{train_library, transcribe_clip, NoteClip},
    synth::{self, render_note, render_sequence, Timbre},
    transcriber::{pick_onsets, NoteEvent, PeakPickConfig},
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchOptions {
    pub seed: u64,
    /// Multiplies instance counts and problem sizes.
    pub scale: f64,
    /// Include the audio round trip (train, synthesize, transcribe, score).
    pub end_to_end: bool,
    /// Test hook: inflates every recorded cost by `1e-3 * k` at iteration
    /// `k`, which the monotonicity check must catch.
    pub sabotage: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            scale: 1.0,
            end_to_end: true,
            sabotage: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub checks: Vec<CheckResult>,
}

impl BenchReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:<28} {:>12} {:>12} {:>8}  detail",
            "status", "check", "measured", "limit", "seconds"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<6} {:<28} {:>12.4e} {:>12.4e} {:>8.2}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.limit,
                c.seconds,
                c.detail
            );
        }
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), self.failures());
        out
    }
}

pub fn run(opts: &BenchOptions) -> BenchReport {
    let mut checks = vec![
        timed(|| monotonicity(opts)),
        timed(|| degeneracy(opts)),
        timed(|| convexity(opts)),
        timed(|| planted_template(opts)),
        timed(|| planted_transcription(opts)),
        timed(|| peak_picking(opts)),
        timed(|| matching(opts)),
        timed(|| stft_dimensions(opts)),
    ];
    if opts.end_to_end {
        checks.push(timed(|| end_to_end(opts)));
    }
    BenchReport { checks }
}

fn timed(check: impl FnOnce() -> CheckResult) -> CheckResult {
    let started = Instant::now();
    let mut result = check();
    result.seconds = started.elapsed().as_secs_f64();
    result
}

fn count(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(1)
}

fn result(name: &'static str, measured: f64, limit: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        measured,
        limit,
        detail,
        seconds: 0.0,
    }
}

fn monotonicity(opts: &BenchOptions) -> CheckResult {
    const SLACK: f64 = 1e-9;
    let runs = count(20, opts.scale);
    let mut worst = f64::NEG_INFINITY;
    let mut increased = 0;
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(k as u64));
        let n = rng.gen_range(2..=count(32, opts.scale));
        let m = rng.gen_range(8..=count(64, opts.scale).max(8));
        let r = rng.gen_range(1..=6);
        let tau = rng.gen_range(1..=5);
        let data = synth::random_matrix(n, m, 0.0, 1.0, &mut rng);
        let w0 = TemplateTensor::new(synth::random_tensor(n, tau, r, 0.01, 1.0, &mut rng)).expect("positive");
        let h0 = ActivationMatrix::new(synth::random_matrix(r, m, 0.01, 1.0, &mut rng)).expect("positive");
        let cfg = SolverConfig::training().with_iters(200);
        let (_, _, trace) = fit_cnmf(data.view(), w0, h0, &cfg).expect("valid instance");
        let mut costs = trace.cost_per_iteration;
        if opts.sabotage {
            for (k, c) in costs.iter_mut().enumerate() {
                *c += 1e-3 * k as f64;
            }
        }
        let mass = data.sum();
        let mut bad = false;
        for pair in costs.windows(2) {
            // Relative increase beyond what the cost evaluation can resolve.
            let step = (pair[1] - pair[0] - resolution(pair[0], mass)) / pair[0];
            worst = worst.max(step);
            bad |= step > SLACK;
        }
        increased += bad as usize;
    }
    result(
        "monotone KL descent",
        worst,
        SLACK,
        increased == 0,
        format!("{increased}/{runs} runs increased over 200 iterations (net of rounding floor)"),
    )
}

/// Smallest cost change that can be resolved at cost `cost`. The model is
/// only known to about one ulp per entry, so the divergence `sum x g(u)`,
/// with `g(u) ~ u^2/2`, carries noise of order `eps * sum x |u|`, and
/// `sum x |u| <= sqrt(2 cost mass)`. It only matters for fits that are
/// exact to ~1e-11 relative.
fn resolution(cost: f64, mass: f64) -> f64 {
    8.0 * f64::EPSILON * (2.0 * cost * mass).sqrt()
}

fn degeneracy(opts: &BenchOptions) -> CheckResult {
    const LIMIT: f64 = 1e-12;
    let runs = count(10, opts.scale);
    let mut worst = 0.0f64;
    let close = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(100 + k as u64));
        let n = rng.gen_range(2..=30);
        let m = rng.gen_range(2..=40);
        let r = rng.gen_range(1..=5);
        let data = synth::random_matrix(n, m, 0.0, 2.0, &mut rng);
        let w = synth::random_matrix(n, r, 0.01, 1.0, &mut rng);
        let h = synth::random_matrix(r, m, 0.01, 1.0, &mut rng);
        let wt = TemplateTensor::new(w.clone().insert_axis(Axis(1))).expect("positive");
        let ht = ActivationMatrix::new(h.clone()).expect("positive");

        let model = cnmf_apply(&wt, &ht).expect("shapes agree");
        let (expect_model, expect_h, expect_w) = classical_nmf_step(&data, &w, &h);
        let got_h = update_h(data.view(), &wt, &ht, DEFAULT_EPSILON).expect("shapes agree");
        let got_w = update_w(data.view(), &wt, &ht, DEFAULT_EPSILON).expect("shapes agree");
        let got_w = got_w.values().index_axis(Axis(1), 0);
        let pairs = model
            .iter()
            .zip(expect_model.iter())
            .chain(got_h.values().iter().zip(expect_h.iter()))
            .chain(got_w.iter().zip(expect_w.iter()));
        for (a, b) in pairs {
            worst = worst.max(close(*a, *b));
        }
    }
    result(
        "tau=1 equals KL-NMF",
        worst,
        LIMIT,
        worst <= LIMIT,
        format!("{runs} instances, model and both updates"),
    )
}

fn convexity(opts: &BenchOptions) -> CheckResult {
    const LIMIT: f64 = 1e-4;
    let runs = count(4, opts.scale);
    let mut worst = 0.0f64;
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(200 + k as u64));
        let (n, tau, r, m) = (40, 3, 3, 36);
        let w = synth::random_templates(n, tau, r, &mut rng);
        let truth = ActivationMatrix::new(synth::random_matrix(r, m, 0.0, 2.0, &mut rng)).expect("nonnegative");
        let mut data = cnmf_apply(&w, &truth).expect("shapes agree");
        data.mapv_inplace(|v| v + rng.gen_range(0.0..0.05));
        let costs: Vec<f64> = (0..4)
            .map(|_| {
                let h0 = ActivationMatrix::new(synth::random_matrix(r, m, 0.01, 3.0, &mut rng)).expect("positive");
                let (_, trace) =
                    solve_activations(data.view(), &w, h0, &SolverConfig::training()).expect("valid instance");
                trace.final_cost().expect("iterations ran")
            })
            .collect();
        let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((hi - lo) / lo);
    }
    result(
        "fixed-W convexity",
        worst,
        LIMIT,
        worst <= LIMIT,
        format!("{runs} instances x 4 starts, relative objective spread"),
    )
}

fn planted_template(opts: &BenchOptions) -> CheckResult {
    const LIMIT: f64 = 0.99;
    let runs = count(5, opts.scale);
    let (n, tau, m) = (32, 4, 50);
    let mut lowest = f64::INFINITY;
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(300 + k as u64));
        let planted = synth::random_matrix(n, tau, 0.0, 1.0, &mut rng);
        let mut h = Array2::zeros((1, m));
        for t in [2, 20, 38] {
            h[[0, t]] = rng.gen_range(0.5..2.0);
        }
        let v = convolve(&planted.clone().insert_axis(Axis(2)), &h);
        let (template, _) = train_note_template(v.view(), tau, &SolverConfig::training()).expect("trainable");
        lowest = lowest.min(shifted_cosine(&planted, &template));
    }
    result(
        "planted template recovery",
        lowest,
        LIMIT,
        lowest > LIMIT,
        format!("{runs} seeds, lowest best-shift cosine"),
    )
}

fn planted_transcription(opts: &BenchOptions) -> CheckResult {
    let runs = count(5, opts.scale);
    let (n, tau, r) = (48, 4, 4);
    let m = count(160, opts.scale).max(80);
    let mut exact = 0;
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(400 + k as u64));
        let w = synth::random_templates(n, tau, r, &mut rng);
        let truth = synth::planted_impulses(r, m, tau + 1, 3, m / 20, (1.0, 3.0), &mut rng);
        let data = convolve(w.values(), truth.values());
        let (h, _) = transcribe_activations(data.view(), &w, &SolverConfig::transcription()).expect("valid instance");
        let found = pick_onsets(&h, &PeakPickConfig::new(0.05, 0.02));
        let planted: Vec<Vec<usize>> = (0..r)
            .map(|q| (0..m).filter(|&t| truth.values()[[q, t]] > 0.0).collect())
            .collect();
        exact += (found == planted) as usize;
    }
    let misses = (runs - exact) as f64;
    result(
        "planted transcription",
        misses,
        0.0,
        exact == runs,
        format!("{exact}/{runs} exact onset sets at delta 0.05"),
    )
}

fn peak_picking(opts: &BenchOptions) -> CheckResult {
    let runs = count(20, opts.scale);
    let mut mismatches = 0;
    let mut rows = 0;
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(500 + k as u64));
        let values = Array2::from_shape_simple_fn((8, 200), || {
            if rng.gen_bool(0.7) {
                rng.gen_range(0.0..0.05)
            } else {
                rng.gen_range(0.0..1.0)
            }
        });
        let h = ActivationMatrix::new(values.clone()).expect("nonnegative");
        for delta in default_grid() {
            let picked = pick_onsets(&h, &PeakPickConfig::new(delta, 0.02));
            for (q, got) in picked.iter().enumerate() {
                rows += 1;
                let row = values.row(q).to_vec();
                mismatches += (*got != literal_onsets(&row, delta, 10)) as usize;
            }
        }
    }
    result(
        "peak picking oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{mismatches} of {rows} rows differ"),
    )
}

fn matching(opts: &BenchOptions) -> CheckResult {
    let runs = count(300, opts.scale);
    let mut mismatches = 0;
    for k in 0..runs {
        let mut rng = synth::rng(opts.seed.wrapping_add(600 + k as u64));
        let nr = rng.gen_range(0..=6);
        let ne = rng.gen_range(0..=6);
        let mut notes = |count: usize| -> Vec<NoteEvent> {
            (0..count)
                .map(|_| NoteEvent::new(rng.gen_range(60..62), rng.gen_range(0..30) as f64 * 0.01, 0.1))
                .collect()
        };
        let reference = notes(nr);
        let estimate = notes(ne);
        let feasible: Vec<Vec<bool>> = reference
            .iter()
            .map(|a| {
                estimate
                    .iter()
                    .map(|b| a.pitch == b.pitch && ((a.onset - b.onset).abs() * 1e4).round() <= 500.0)
                    .collect()
            })
            .collect();
        let got = match_notes(&reference, &estimate, 0.05);
        mismatches += (got.tp != exhaustive_matching(&feasible)) as usize;
    }
    result(
        "matching oracle",
        mismatches as f64,
        0.0,
        mismatches == 0,
        format!("{mismatches}/{runs} cases differ from exhaustive search"),
    )
}

fn stft_dimensions(opts: &BenchOptions) -> CheckResult {
    let cfg = StftConfig::default();
    let mut rng = synth::rng(opts.seed.wrapping_add(700));
    let mut wrong = 0;
    let runs = count(10, opts.scale);
    for _ in 0..runs {
        let len = rng.gen_range(cfg.hop_length..5 * SAMPLE_RATE as usize);
        let clip = AudioClip::new(vec![0.0; len], SAMPLE_RATE).expect("finite");
        let spec = compute_spectrogram(&clip, &cfg).expect("long enough");
        wrong += (spec.bins() != cfg.fft_size / 2 + 1 || spec.frames() != 1 + len / cfg.hop_length) as usize;
    }
    let thirty = AudioClip::new(vec![0.0; 30 * SAMPLE_RATE as usize], SAMPLE_RATE).expect("finite");
    let spec = compute_spectrogram(&thirty, &cfg).expect("long enough");
    wrong += (spec.bins(), spec.frames()).ne(&(4097, 1501)) as usize;
    result(
        "STFT dimensions",
        wrong as f64,
        0.0,
        wrong == 0,
        format!("{} lengths; 30 s gives {} x {}", runs + 1, spec.bins(), spec.frames()),
    )
}

fn end_to_end(opts: &BenchOptions) -> CheckResult {
    const LIMIT: f64 = 0.9;
    let timbre = Timbre::default();
    let pitches = [60u8, 61, 62];
    let notes: Vec<NoteClip> = pitches
        .iter()
        .map(|&p| NoteClip {
            pitch: p,
            clip: render_note(p, 0.25, 1.0, SAMPLE_RATE, &timbre),
            label: format!("synthetic {p}"),
        })
        .collect();
    let (lib, _) =
        train_library(&notes, 10, &SolverConfig::training(), &StftConfig::default()).expect("trainable notes");
    let mut rng = synth::rng(opts.seed.wrapping_add(800));
    let reference = synth::random_sequence(&pitches, 12, 10.0, 0.3, &mut rng);
    let song = render_sequence(&reference, 10.0, SAMPLE_RATE, &timbre);
    let out = transcribe_clip(&song, &lib, &SolverConfig::transcription(), 0.05).expect("compatible library");
    let sweep = sweep_thresholds(
        &[SongActivations {
            name: "synthetic".into(),
            activations: out.activations,
            hop_seconds: out.spectrogram.hop_seconds(),
            midi_base: lib.midi_base,
            reference: reference.clone(),
        }],
        &default_grid(),
        0.05,
        None,
        SweepMode::Global,
    )
    .expect("non-empty grid");
    let best = sweep.reports[sweep.best_global][0];
    result(
        "end-to-end transcription",
        best.f_measure,
        LIMIT,
        best.f_measure >= LIMIT,
        format!(
            "best F at delta {:.2}: tp={} fp={} fn={}",
            sweep.best_global_delta(),
            best.tp,
            best.fp,
            best.fn_
        ),
    )
}

/// Convolutive model with the time shift written as an explicit loop.
fn convolve(w: &Array3<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (n, tau, r) = w.dim();
    let m = h.ncols();
    Array2::from_shape_fn((n, m), |(f, t)| {
        let mut acc = 0.0;
        for q in 0..r {
            for i in 0..tau.min(t + 1) {
                acc += w[[f, i, q]] * h[[q, t - i]];
            }
        }
        acc
    })
}

/// Model, H update and W update of classical KL-NMF, from the textbook
/// formulas.
fn classical_nmf_step(v: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let eps = DEFAULT_EPSILON;
    let wh = w.dot(h);
    let ratio = Array2::from_shape_fn(v.dim(), |(f, t)| v[[f, t]] / (wh[[f, t]] + eps));
    let wt_ratio = w.t().dot(&ratio);
    let ratio_ht = ratio.dot(&h.t());
    let col_sums = w.sum_axis(Axis(0));
    let row_sums = h.sum_axis(Axis(1));
    let new_h = Array2::from_shape_fn(h.dim(), |(q, t)| h[[q, t]] * wt_ratio[[q, t]] / (col_sums[q] + eps));
    let new_w = Array2::from_shape_fn(w.dim(), |(f, q)| w[[f, q]] * ratio_ht[[f, q]] / (row_sums[q] + eps));
    (wh, new_h, new_w)
}

fn shifted_cosine(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (n, tau) = a.dim();
    let norm = |x: &Array2<f64>| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    (0..tau)
        .map(|s| {
            let mut dot = 0.0;
            for f in 0..n {
                for i in 0..tau {
                    dot += a[[f, i]] * b[[f, (i + s) % tau]];
                }
            }
            dot / denom
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn literal_onsets(row: &[f64], delta: f64, half: usize) -> Vec<usize> {
    let m = row.len() as isize;
    let half = half as isize;
    (0..m)
        .filter(|&t| {
            let sum: f64 = (t - half..=t + half)
                .filter(|k| (0..m).contains(k))
                .map(|k| row[k as usize])
                .sum();
            row[t as usize] > sum / (2 * half + 1) as f64 + delta
        })
        .map(|t| t as usize)
        .collect()
}

fn exhaustive_matching(feasible: &[Vec<bool>]) -> usize {
    fn go(r: usize, feasible: &[Vec<bool>], used: &mut [bool]) -> usize {
        if r == feasible.len() {
            return 0;
        }
        let mut best = go(r + 1, feasible, used);
        for e in 0..used.len() {
            if feasible[r][e] && !used[e] {
                used[e] = true;
                best = best.max(1 + go(r + 1, feasible, used));
                used[e] = false;
            }
        }
        best
    }
    let columns = feasible.first().map_or(0, Vec::len);
    go(0, feasible, &mut vec![false; columns])
}
