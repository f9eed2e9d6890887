use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cnmf_core::{
    audio::{load_audio, AudioClip, StftConfig},
    bench::{self, BenchOptions},
    cnmf::SolverConfig,
    csv::{activation_csv, read_activation_csv, write_text},
    eval::{default_grid, score, sweep_thresholds, SongActivations, SweepMode},
    midi::{read_midi, write_midi},
    pipeline::{train_library, transcribe_clip, NoteClip},
    transcriber::truncate_events,
    TemplateLibrary,
};
use rayon::prelude::*;
use serde_json::json;

use crate::{
    args::{BenchArgs, EvalArgs, Sweep, TrainArgs, TranscribeArgs},
    error::CliError,
    manifest::{beside, RunManifest},
    naming::note_files,
    report::{to_csv, to_table, SongRow},
};

pub fn train(args: &TrainArgs, manifest_path: Option<&Path>) -> Result<(), CliError> {
    if args.tau == 0 || args.iters == 0 {
        return Err(CliError::Usage("--tau and --iters must be at least 1".into()));
    }
    if args.intensity.is_some() && args.naming != crate::args::Naming::Maps {
        return Err(CliError::Usage("--intensity only applies with --naming maps".into()));
    }
    let mut manifest = RunManifest::new("train");
    manifest.param("tau", args.tau);
    manifest.param("iterations", args.iters);
    manifest.param("naming", format!("{:?}", args.naming).to_lowercase());
    if let Some(i) = &args.intensity {
        manifest.param("intensity", i.as_str());
    }

    let files = note_files(&args.notes, args.naming, args.intensity.as_deref(), args.range)?;
    let clips: Vec<NoteClip> = manifest.time("load", || {
        files
            .par_iter()
            .map(|(pitch, path)| {
                Ok(NoteClip {
                    pitch: *pitch,
                    clip: load_audio(path)?,
                    label: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                })
            })
            .collect::<Result<_, CliError>>()
    })?;
    for (_, path) in &files {
        manifest.input(path);
    }

    let solver = SolverConfig::training().with_iters(args.iters);
    let stft = StftConfig::default();
    let (lib, fits) = manifest.time("train", || train_library(&clips, args.tau, &solver, &stft))?;
    manifest.stft(&lib.stft);
    lib.save(&args.out)?;
    manifest.output(&args.out);

    let mut notes = Vec::with_capacity(fits.len());
    for fit in &fits {
        let cost = fit.trace.final_cost().unwrap_or(f64::NAN);
        println!(
            "MIDI {:>3}  final KL {:.6e}  {} iterations  {:.2} s",
            fit.pitch,
            cost,
            fit.trace.iterations_run(),
            fit.seconds
        );
        let worst_step = fit
            .trace
            .cost_per_iteration
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        notes.push(json!({
            "pitch": fit.pitch,
            "final_cost": cost,
            "iterations": fit.trace.iterations_run(),
            "max_relative_increase": if worst_step.is_finite() { json!(worst_step) } else { json!(null) },
            "seconds": fit.seconds,
        }));
    }
    let mean_seconds = fits.iter().map(|f| f.seconds).sum::<f64>() / fits.len().max(1) as f64;
    println!(
        "{} templates, {:.2} s per template, saved to {}",
        lib.notes(),
        mean_seconds,
        args.out.display()
    );
    manifest.result("notes", notes);
    manifest.result("midi_base", lib.midi_base);
    manifest.result("templates", lib.notes());
    manifest.result("seconds_per_template", mean_seconds);
    manifest.write(&manifest_path.map_or_else(|| beside(&args.out), Path::to_path_buf))
}

struct Job {
    input: PathBuf,
    midi: PathBuf,
    csv: Option<PathBuf>,
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn transcription_jobs(args: &TranscribeArgs) -> Result<Vec<Job>, CliError> {
    if !args.input.is_dir() {
        return Ok(vec![Job {
            input: args.input.clone(),
            midi: args.out.clone(),
            csv: args.csv.clone(),
        }]);
    }
    std::fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    if let Some(dir) = &args.csv {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let files = wav_files(&args.input)?;
    if files.is_empty() {
        return Err(CliError::Data(format!("no WAV files in {}", args.input.display())));
    }
    Ok(files
        .into_iter()
        .map(|input| {
            let stem = input.file_stem().unwrap_or_default().to_os_string();
            let named = |dir: &Path, ext: &str| dir.join(&stem).with_extension(ext);
            Job {
                midi: named(&args.out, "mid"),
                csv: args.csv.as_deref().map(|d| named(d, "csv")),
                input,
            }
        })
        .collect())
}

pub fn transcribe(args: &TranscribeArgs, manifest_path: Option<&Path>) -> Result<(), CliError> {
    if !(args.delta.is_finite() && args.delta >= 0.0) {
        return Err(CliError::Usage(format!(
            "--delta must be a nonnegative number, got {}",
            args.delta
        )));
    }
    if args.iters == 0 {
        return Err(CliError::Usage("--iters must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("transcribe");
    manifest.param("delta", args.delta);
    manifest.param("iterations", args.iters);
    manifest.param("half_window", cnmf_core::transcriber::DEFAULT_HALF_WINDOW);
    manifest.param("velocity", cnmf_core::transcriber::DEFAULT_VELOCITY);

    let lib = manifest.time("load library", || TemplateLibrary::load(&args.lib))?;
    manifest.input(&args.lib);
    manifest.stft(&lib.stft);
    manifest.param("tau", lib.tensor.tau());
    manifest.param("midi_base", lib.midi_base);
    manifest.param("templates", lib.notes());

    let jobs = transcription_jobs(args)?;
    let solver = SolverConfig::transcription().with_iters(args.iters);
    let started = Instant::now();
    let results: Vec<serde_json::Value> = jobs
        .par_iter()
        .map(|job| -> Result<serde_json::Value, CliError> {
            let job_started = Instant::now();
            let mut clip: AudioClip = load_audio(&job.input)?;
            if clip.sample_rate() != lib.stft.sample_rate {
                clip = clip.resampled(lib.stft.sample_rate)?;
            }
            let out = transcribe_clip(&clip, &lib, &solver, args.delta)?;
            write_midi(&out.events, &job.midi)?;
            if let Some(csv) = &job.csv {
                let text = activation_csv(&out.activations, out.spectrogram.hop_seconds(), lib.midi_base);
                write_text(csv, &text)?;
            }
            let seconds = job_started.elapsed().as_secs_f64();
            Ok(json!({
                "input": job.input.display().to_string(),
                "events": out.events.len(),
                "final_cost": out.trace.final_cost(),
                "audio_seconds": clip.duration_seconds(),
                "seconds": seconds,
                "seconds_per_30s": seconds * 30.0 / clip.duration_seconds().max(f64::MIN_POSITIVE),
            }))
        })
        .collect::<Result<_, _>>()?;
    manifest.timings.push(crate::manifest::Timing {
        phase: "transcribe".into(),
        seconds: started.elapsed().as_secs_f64(),
    });

    for (job, result) in jobs.iter().zip(&results) {
        manifest.input(&job.input);
        manifest.output(&job.midi);
        if let Some(csv) = &job.csv {
            manifest.output(csv);
        }
        println!(
            "{} -> {}: {} notes, final KL {:.6e}",
            job.input.display(),
            job.midi.display(),
            result["events"],
            result["final_cost"].as_f64().unwrap_or(f64::NAN)
        );
    }
    manifest.result("songs", results);
    let default = if args.input.is_dir() {
        args.out.join("transcribe.manifest.json")
    } else {
        beside(&args.out)
    };
    manifest.write(&manifest_path.map_or(default, Path::to_path_buf))
}

/// Files in `dir` with one of `extensions`, keyed by stem.
fn by_stem(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| extensions.contains(&e.as_str())) {
            let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            if let Some(previous) = out.insert(stem.clone(), path) {
                return Err(CliError::Data(format!(
                    "two files for song '{stem}', including {}",
                    previous.display()
                )));
            }
        }
    }
    Ok(out)
}

/// Pairs estimate and reference files by name; any file without a partner
/// is an error.
fn pair_songs(est: &Path, est_ext: &[&str], reference: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    let estimates = by_stem(est, est_ext)?;
    let references = by_stem(reference, &["mid", "midi"])?;
    let mut unmatched: Vec<String> = Vec::new();
    for (stem, path) in &estimates {
        if !references.contains_key(stem) {
            unmatched.push(format!("no reference for {}", path.display()));
        }
    }
    for (stem, path) in &references {
        if !estimates.contains_key(stem) {
            unmatched.push(format!("no estimate for {}", path.display()));
        }
    }
    if !unmatched.is_empty() {
        return Err(CliError::Data(format!(
            "unmatched files:\n  {}",
            unmatched.join("\n  ")
        )));
    }
    if estimates.is_empty() {
        return Err(CliError::Data(format!("no songs found in {}", est.display())));
    }
    Ok(estimates
        .into_iter()
        .map(|(stem, e)| {
            let r = references[&stem].clone();
            (stem, e, r)
        })
        .collect())
}

pub fn eval(args: &EvalArgs, manifest_path: Option<&Path>) -> Result<(), CliError> {
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(CliError::Usage(format!(
            "--tol must be a nonnegative number, got {}",
            args.tol
        )));
    }
    if args.first_seconds.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
        return Err(CliError::Usage("--first-seconds must be positive".into()));
    }
    let mut manifest = RunManifest::new("eval");
    manifest.param("tolerance", args.tol);
    manifest.param("first_seconds", args.first_seconds);
    manifest.param("sweep", args.sweep.map(|s| format!("{s:?}").to_lowercase()));

    let est_ext: &[&str] = if args.sweep.is_some() {
        &["csv"]
    } else {
        &["mid", "midi"]
    };
    let songs = pair_songs(&args.est, est_ext, &args.reference)?;
    let limit = |events: Vec<cnmf_core::NoteEvent>| match args.first_seconds {
        Some(s) => truncate_events(&events, s),
        None => events,
    };

    let rows: Vec<SongRow> = match args.sweep {
        None => manifest.time("score", || {
            songs
                .par_iter()
                .map(|(name, est, reference)| {
                    let report = score(&limit(read_midi(reference)?), &limit(read_midi(est)?), args.tol);
                    Ok(SongRow {
                        song: name.clone(),
                        delta: None,
                        report,
                    })
                })
                .collect::<Result<_, CliError>>()
        })?,
        Some(mode) => {
            let grid = default_grid();
            manifest.param("grid", grid.clone());
            let inputs: Vec<SongActivations> = songs
                .par_iter()
                .map(|(name, est, reference)| {
                    let table = read_activation_csv(est)?;
                    Ok(SongActivations {
                        name: name.clone(),
                        activations: table.activations,
                        hop_seconds: table.hop_seconds,
                        midi_base: table.midi_base,
                        reference: read_midi(reference)?,
                    })
                })
                .collect::<Result<_, CliError>>()?;
            let mode = match mode {
                Sweep::Global => SweepMode::Global,
                Sweep::Song => SweepMode::PerSong,
            };
            let sweep = manifest.time("sweep", || {
                sweep_thresholds(&inputs, &grid, args.tol, args.first_seconds, mode)
            })?;
            let mut curve = String::from("delta,macro_f\n");
            for (d, delta) in grid.iter().enumerate() {
                let mean = sweep.reports[d].iter().map(|r| r.f_measure).sum::<f64>() / inputs.len() as f64;
                curve.push_str(&format!("{delta:.2},{mean:.6}\n"));
            }
            let curve_path = args.out_dir.join("sweep.csv");
            create_dir(&args.out_dir)?;
            write_text(&curve_path, &curve)?;
            manifest.output(&curve_path);
            manifest.result("best_global_delta", sweep.best_global_delta());
            inputs
                .iter()
                .enumerate()
                .map(|(s, song)| SongRow {
                    song: song.name.clone(),
                    delta: Some(grid[sweep.chosen_index(s)]),
                    report: sweep.reports[sweep.chosen_index(s)][s],
                })
                .collect()
        }
    };
    for (_, est, reference) in &songs {
        manifest.input(est);
        manifest.input(reference);
    }

    let table = to_table(&rows);
    print!("{table}");
    create_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("report.csv");
    let txt_path = args.out_dir.join("report.txt");
    write_text(&csv_path, &to_csv(&rows))?;
    write_text(&txt_path, &table)?;
    manifest.output(&csv_path);
    manifest.output(&txt_path);
    let agg = cnmf_core::eval::aggregate(&rows.iter().map(|r| r.report).collect::<Vec<_>>());
    manifest.result("macro_f", agg.macro_f);
    manifest.result("micro_f", agg.micro.f_measure);
    manifest.write(&manifest_path.map_or_else(|| args.out_dir.join("eval.manifest.json"), Path::to_path_buf))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn synthbench(args: &BenchArgs, manifest_path: Option<&Path>) -> Result<(), CliError> {
    if !(args.scale.is_finite() && args.scale > 0.0) {
        return Err(CliError::Usage("--scale must be positive".into()));
    }
    let opts = BenchOptions {
        seed: args.seed,
        scale: args.scale,
        end_to_end: !args.no_audio,
        sabotage: args.sabotage,
    };
    let mut manifest = RunManifest::new("synthbench");
    manifest.param("seed", args.seed);
    manifest.param("scale", args.scale);
    manifest.param("end_to_end", opts.end_to_end);
    let report = manifest.time("suite", || bench::run(&opts));
    print!("{}", report.table());
    for c in &report.checks {
        manifest.result(
            c.name,
            json!({ "passed": c.passed, "measured": c.measured, "limit": c.limit, "seconds": c.seconds }),
        );
    }
    if let Some(path) = manifest_path {
        manifest.write(path)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::SuiteFailed {
            failed: report.failures(),
            total: report.checks.len(),
        })
    }
}
