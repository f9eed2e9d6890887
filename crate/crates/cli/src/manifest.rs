//! Run manifests: one JSON record per invocation with every parameter that
//! affects the outputs, the files involved and per-phase wall-clock time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cnmf_core::audio::StftMeta;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: Map<String, Value>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timings: Vec<Timing>,
    pub results: Map<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            results: Map::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.parameters.insert(key.to_string(), value.into());
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn stft(&mut self, meta: &StftMeta) {
        let c = &meta.config;
        self.param(
            "stft",
            json!({
                "sample_rate": meta.sample_rate,
                "window": c.window.to_string(),
                "window_length": c.window_length,
                "hop_length": c.hop_length,
                "fft_size": c.fft_size,
            }),
        );
    }

    /// Runs `phase` and records how long it took.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let started = Instant::now();
        let out = f();
        self.timings.push(Timing {
            phase: phase.to_string(),
            seconds: started.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest is plain data");
        std::fs::write(path, text + "\n").map_err(CliError::io(path))
    }
}

/// `out.mid` becomes `out.mid.manifest.json`.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
