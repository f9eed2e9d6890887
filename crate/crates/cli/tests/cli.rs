use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use cnmf_core::{
    audio::{write_wav, AudioClip, SAMPLE_RATE},
    midi::{read_midi, write_midi},
    synth::{self, render_note, render_sequence, Timbre},
    NoteEvent,
};
use rand::Rng;
use tempfile::TempDir;

const HOP_SECONDS: f64 = 0.02;

fn cnmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnmf"))
        .args(args)
        .env_remove("CNMF_JOBS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Activations peak near 0.2 at this level, well clear of delta = 0.05.
fn timbre() -> Timbre {
    Timbre {
        amplitude: 0.01,
        ..Timbre::default()
    }
}

fn write_notes(dir: &Path, pitches: &[u8]) {
    std::fs::create_dir_all(dir).unwrap();
    for &pitch in pitches {
        let clip = render_note(pitch, 0.25, 1.0, SAMPLE_RATE, &timbre());
        write_wav(&clip, dir.join(format!("{pitch}_synthetic.wav"))).unwrap();
    }
}

/// Onsets half a hop past a frame boundary, the same phase as the 0.25 s
/// lead-in of the training clips, so the song is an exact sum of shifted
/// training notes. An onset half a hop off that phase splits its
/// activation evenly over two frames and is detected twice.
fn planted() -> Vec<NoteEvent> {
    vec![
        NoteEvent::new(60, 0.51, 0.5),
        NoteEvent::new(62, 1.31, 0.5),
        NoteEvent::new(61, 2.11, 0.5),
    ]
}

/// One trained 3-note library and a matching song, shared by the tests.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn lib(&self) -> PathBuf {
        self.dir.path().join("lib.cnmf")
    }

    fn song(&self) -> PathBuf {
        self.dir.path().join("song.wav")
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let notes = dir.path().join("notes");
        write_notes(&notes, &[60, 61, 62]);
        let lib = dir.path().join("lib.cnmf");
        let out = cnmf(&[
            "train",
            "--notes",
            p(&notes),
            "--tau",
            "10",
            "--iters",
            "500",
            "--out",
            p(&lib),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let song = render_sequence(&planted(), 3.0, SAMPLE_RATE, &timbre());
        write_wav(&song, dir.path().join("song.wav")).unwrap();
        Fixture { dir }
    })
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(cnmf(&["--help"]).status.code(), Some(0));
    assert_eq!(cnmf(&["--version"]).status.code(), Some(0));
    assert_eq!(cnmf(&[]).status.code(), Some(1));
    assert_eq!(cnmf(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(cnmf(&["transcribe", "--in", "x.wav"]).status.code(), Some(1));
    let out = cnmf(&["--jobs", "0", "synthbench", "--no-audio", "--scale", "0.1"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn training_reports_missing_pitch() {
    let dir = tempfile::tempdir().unwrap();
    write_notes(dir.path(), &[59, 61]);
    let out = cnmf(&["train", "--notes", p(dir.path()), "--out", p(&dir.path().join("lib"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("missing template for MIDI 60"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn training_rejects_duplicate_pitch() {
    let dir = tempfile::tempdir().unwrap();
    write_notes(dir.path(), &[60]);
    std::fs::copy(dir.path().join("60_synthetic.wav"), dir.path().join("60_copy.wav")).unwrap();
    let out = cnmf(&["train", "--notes", p(dir.path()), "--out", p(&dir.path().join("lib"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("duplicate files for MIDI 60"), "{}", stderr(&out));
}

#[test]
fn training_manifest_records_monotone_traces() {
    let f = fixture();
    let text = std::fs::read_to_string(f.dir.path().join("lib.cnmf.manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["parameters"]["tau"], 10);
    assert_eq!(manifest["parameters"]["stft"]["fft_size"], 8192);
    let notes = manifest["results"]["notes"].as_array().unwrap();
    assert_eq!(notes.len(), 3);
    for note in notes {
        assert_eq!(note["iterations"], 500);
        assert!(note["max_relative_increase"].as_f64().unwrap() <= 1e-9, "{note}");
    }
}

#[test]
fn transcribes_planted_notes() {
    let f = fixture();
    let out_dir = tempfile::tempdir().unwrap();
    let mid = out_dir.path().join("song.mid");
    let out = cnmf(&[
        "transcribe",
        "--in",
        p(&f.song()),
        "--lib",
        p(&f.lib()),
        "--delta",
        "0.05",
        "--out",
        p(&mid),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let events = read_midi(&mid).unwrap();
    assert_eq!(events.len(), 3, "{events:?}");
    for (got, want) in events.iter().zip(planted()) {
        assert_eq!(got.pitch, want.pitch);
        assert!(
            (got.onset - want.onset).abs() <= HOP_SECONDS + 1e-3,
            "{got:?} vs {want:?}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.path().join("song.mid.manifest.json")).unwrap()).unwrap();
    assert!(manifest["results"]["songs"][0]["final_cost"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["parameters"]["delta"], 0.05);
}

#[test]
fn silence_gives_empty_midi() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("silence.wav");
    write_wav(
        &AudioClip::new(vec![0.0; 2 * SAMPLE_RATE as usize], SAMPLE_RATE).unwrap(),
        &wav,
    )
    .unwrap();
    let mid = dir.path().join("silence.mid");
    let out = cnmf(&["transcribe", "--in", p(&wav), "--lib", p(&f.lib()), "--out", p(&mid)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(read_midi(&mid).unwrap().is_empty());
}

#[test]
fn lower_delta_finds_more_events_on_noise() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = synth::rng(42);
    let song = render_sequence(&planted(), 3.0, SAMPLE_RATE, &timbre());
    let noisy: Vec<f64> = song.samples().iter().map(|s| s + rng.gen_range(-0.01..0.01)).collect();
    let wav = dir.path().join("noisy.wav");
    write_wav(&AudioClip::new(noisy, SAMPLE_RATE).unwrap(), &wav).unwrap();
    let count = |delta: &str| {
        let mid = dir.path().join(format!("{delta}.mid"));
        let out = cnmf(&[
            "transcribe",
            "--in",
            p(&wav),
            "--lib",
            p(&f.lib()),
            "--delta",
            delta,
            "--out",
            p(&mid),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        read_midi(&mid).unwrap().len()
    };
    assert!(count("0") > count("0.1"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str, jobs: &str| {
        let mid = dir.path().join(format!("{tag}.mid"));
        let csv = dir.path().join(format!("{tag}.csv"));
        let out = cnmf(&[
            "--jobs",
            jobs,
            "transcribe",
            "--in",
            p(&f.song()),
            "--lib",
            p(&f.lib()),
            "--out",
            p(&mid),
            "--csv",
            p(&csv),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        (std::fs::read(mid).unwrap(), std::fs::read(csv).unwrap())
    };
    let a = run("a", "1");
    let b = run("b", "4");
    assert_eq!(a, run("c", "1"));
    assert_eq!(a, b);
}

#[test]
fn library_mismatch_is_a_data_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("broken.cnmf");
    std::fs::write(&lib, b"not a library at all").unwrap();
    let out = cnmf(&[
        "transcribe",
        "--in",
        p(&f.song()),
        "--lib",
        p(&lib),
        "--out",
        p(&dir.path().join("x.mid")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not a template library"), "{}", stderr(&out));
}

fn write_songs(dir: &Path, songs: &[(&str, Vec<NoteEvent>)]) {
    std::fs::create_dir_all(dir).unwrap();
    for (name, events) in songs {
        write_midi(events, dir.join(format!("{name}.mid"))).unwrap();
    }
}

fn report_rows(dir: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(dir.join("report.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn eval_of_reference_copy_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let songs = [
        (
            "alpha",
            vec![NoteEvent::new(60, 0.5, 0.3), NoteEvent::new(64, 1.0, 0.3)],
        ),
        ("beta", vec![NoteEvent::new(48, 0.25, 0.5)]),
    ];
    write_songs(&dir.path().join("ref"), &songs);
    write_songs(&dir.path().join("est"), &songs);
    let report = dir.path().join("report");
    let out = cnmf(&[
        "eval",
        "--est",
        p(&dir.path().join("est")),
        "--ref",
        p(&dir.path().join("ref")),
        "--out-dir",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = report_rows(&report);
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert_eq!(row[4], "1.000000", "{row:?}");
    }
    assert!(report.join("eval.manifest.json").exists());
}

#[test]
fn eval_planted_errors() {
    let dir = tempfile::tempdir().unwrap();
    let reference: Vec<NoteEvent> = (0..10)
        .map(|k| NoteEvent::new(60 + k as u8, 0.5 * k as f64, 0.2))
        .collect();
    let mut estimate: Vec<NoteEvent> = reference[..8]
        .iter()
        .map(|e| NoteEvent {
            onset: e.onset + 0.03,
            ..*e
        })
        .collect();
    // Two misses: right time, wrong pitch; and right pitch, 80 ms late.
    estimate.push(NoteEvent::new(90, reference[8].onset, 0.2));
    estimate.push(NoteEvent::new(reference[9].pitch, reference[9].onset + 0.08, 0.2));
    write_songs(&dir.path().join("ref"), &[("song", reference)]);
    write_songs(&dir.path().join("est"), &[("song", estimate)]);
    let report = dir.path().join("report");
    let out = cnmf(&[
        "eval",
        "--est",
        p(&dir.path().join("est")),
        "--ref",
        p(&dir.path().join("ref")),
        "--out-dir",
        p(&report),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let song = &report_rows(&report)[0];
    assert_eq!(
        &song[2..],
        ["0.800000", "0.800000", "0.800000", "0.666667", "8", "2", "2"]
    );
}

#[test]
fn eval_first_seconds_truncates_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let reference = vec![NoteEvent::new(60, 1.0, 0.2), NoteEvent::new(60, 40.0, 0.2)];
    let estimate = vec![NoteEvent::new(60, 1.01, 0.2), NoteEvent::new(61, 35.0, 0.2)];
    write_songs(&dir.path().join("ref"), &[("s", reference)]);
    write_songs(&dir.path().join("est"), &[("s", estimate)]);
    let report = dir.path().join("report");
    let (est, reference) = (dir.path().join("est"), dir.path().join("ref"));
    let out = cnmf(&[
        "eval",
        "--est",
        p(&est),
        "--ref",
        p(&reference),
        "--out-dir",
        p(&report),
        "--first-seconds",
        "30",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(report_rows(&report)[0][6..], ["1", "0", "0"]);
}

#[test]
fn eval_lists_unmatched_files() {
    let dir = tempfile::tempdir().unwrap();
    write_songs(&dir.path().join("ref"), &[("a", vec![]), ("b", vec![])]);
    write_songs(&dir.path().join("est"), &[("a", vec![]), ("c", vec![])]);
    let out = cnmf(&[
        "eval",
        "--est",
        p(&dir.path().join("est")),
        "--ref",
        p(&dir.path().join("ref")),
        "--out-dir",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("no reference for") && err.contains("c.mid"), "{err}");
    assert!(err.contains("no estimate for") && err.contains("b.mid"), "{err}");
}

#[test]
fn sweep_over_activation_csvs() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let songs = dir.path().join("songs");
    std::fs::create_dir_all(&songs).unwrap();
    std::fs::copy(f.song(), songs.join("piece.wav")).unwrap();
    let out = cnmf(&[
        "transcribe",
        "--in",
        p(&songs),
        "--lib",
        p(&f.lib()),
        "--out",
        p(&dir.path().join("mid")),
        "--csv",
        p(&dir.path().join("csv")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("mid/piece.mid").exists());
    write_songs(&dir.path().join("ref"), &[("piece", planted())]);
    for mode in ["global", "song"] {
        let report = dir.path().join(format!("report-{mode}"));
        let out = cnmf(&[
            "eval",
            "--est",
            p(&dir.path().join("csv")),
            "--ref",
            p(&dir.path().join("ref")),
            "--sweep",
            mode,
            "--out-dir",
            p(&report),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let row = &report_rows(&report)[0];
        assert_eq!(row[4], "1.000000", "{row:?}");
        assert_eq!(
            std::fs::read_to_string(report.join("sweep.csv"))
                .unwrap()
                .lines()
                .count(),
            41
        );
    }
}

#[test]
fn synthbench_passes_and_detects_sabotage() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bench.json");
    let out = cnmf(&[
        "--manifest",
        p(&manifest),
        "synthbench",
        "--seed",
        "5",
        "--scale",
        "0.2",
        "--no-audio",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
    assert!(manifest.exists());

    let out = cnmf(&["synthbench", "--scale", "0.2", "--no-audio", "--sabotage"]);
    assert_eq!(out.status.code(), Some(3));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        table.lines().any(|l| l.starts_with("FAIL") && l.contains("monotone")),
        "{table}"
    );
}

#[test]
fn jobs_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_cnmf"))
        .args(["synthbench", "--scale", "0.1", "--no-audio"])
        .env("CNMF_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
