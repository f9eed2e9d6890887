use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cnmf",
    version,
    about = "Piano transcription with convolutive NMF note templates"
)]
pub struct Cli {
    /// Worker threads for per-note training and per-song transcription.
    #[arg(long, global = true, env = "CNMF_JOBS")]
    pub jobs: Option<usize>,

    /// Where to write the run manifest (JSON). Each command has a default
    /// next to its main output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn one template per note from isolated-note recordings.
    Train(TrainArgs),
    /// Transcribe a recording (or a directory of them) to MIDI.
    Transcribe(TranscribeArgs),
    /// Score transcriptions against reference MIDI files.
    Eval(EvalArgs),
    /// Run the synthetic self-verification suite.
    Synthbench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Naming {
    /// `<midi>_<anything>.wav`
    Plain,
    /// MAPS isolated notes, `MAPS_ISOL_NO_<intensity>_S<sustain>_M<midi>_<piano>.wav`.
    Maps,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with one WAV file per note.
    #[arg(long)]
    pub notes: PathBuf,
    /// Template length in frames.
    #[arg(long, default_value_t = 10)]
    pub tau: usize,
    #[arg(long, default_value_t = cnmf_core::cnmf::TRAINING_ITERATIONS)]
    pub iters: usize,
    /// Output library file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Naming::Plain)]
    pub naming: Naming,
    /// MAPS loudness to keep (P, M or F); only with `--naming maps`.
    #[arg(long)]
    pub intensity: Option<String>,
    /// Require exactly this pitch range, e.g. `21-108`. Defaults to the span
    /// of the files found.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<(u8, u8)>,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    /// WAV file, or a directory whose WAV files are all transcribed.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Template library produced by `train`.
    #[arg(long)]
    pub lib: PathBuf,
    /// Peak-picking offset added to the local mean.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = cnmf_core::cnmf::TRANSCRIPTION_ITERATIONS)]
    pub iters: usize,
    /// Output MIDI file, or a directory when `--in` is a directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write activations as CSV (a directory when `--in` is one).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Global,
    Song,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated transcriptions: MIDI files, or activation CSVs with `--sweep`.
    #[arg(long)]
    pub est: PathBuf,
    /// Reference MIDI files with matching names.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Onset tolerance in seconds.
    #[arg(long, default_value_t = cnmf_core::eval::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Only score notes starting before this time.
    #[arg(long)]
    pub first_seconds: Option<f64>,
    /// Sweep the threshold grid over activation CSVs instead of scoring MIDI.
    #[arg(long, value_enum)]
    pub sweep: Option<Sweep>,
    /// Directory for `report.csv` and `report.txt`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multiplies instance counts and sizes.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Skip the audio round trip.
    #[arg(long)]
    pub no_audio: bool,
    /// Corrupts recorded costs so the monotonicity check must fail.
    #[arg(long, hide = true)]
    pub sabotage: bool,
}

fn parse_range(text: &str) -> Result<(u8, u8), String> {
    let (lo, hi) = text.split_once('-').ok_or("expected LO-HI")?;
    let lo: u8 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: u8 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    if lo > hi || hi > 127 {
        return Err(format!("invalid MIDI range {lo}-{hi}"));
    }
    Ok((lo, hi))
}
