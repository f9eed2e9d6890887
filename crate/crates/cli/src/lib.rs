//! The `cnmf` command line: `train`, `transcribe`, `eval` and `synthbench`.

pub mod args;
mod commands;
pub mod error;
pub mod manifest;
pub mod naming;
pub mod report;

pub use args::Cli;
pub use error::CliError;

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    let manifest = cli.manifest.as_deref();
    match &cli.command {
        args::Command::Train(a) => commands::train(a, manifest),
        args::Command::Transcribe(a) => commands::transcribe(a, manifest),
        args::Command::Eval(a) => commands::eval(a, manifest),
        args::Command::Synthbench(a) => commands::synthbench(a, manifest),
    }
}
