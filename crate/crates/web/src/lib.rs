//! WebAssembly bindings for the transcription demo page in `www/`.
//!
//! A [`Demo`] holds one template library and one transcribed song. Each
//! method returns its view as a JSON string.

pub mod session;

use serde::Serialize;
use wasm_bindgen::prelude::*;

pub use session::{DemoError, Session};

fn json<T: Serialize>(view: Result<T, DemoError>) -> Result<String, JsError> {
    let view = view.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&view).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
#[derive(Default)]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo::default()
    }

    /// Trains templates for MIDI pitches `lo..=hi` from synthetic notes.
    pub fn train(&mut self, lo: u8, hi: u8, iters: u32) -> Result<String, JsError> {
        json(self.session.train(lo, hi, iters as usize))
    }

    /// Renders a random song over the trained pitches and solves its
    /// activations.
    pub fn transcribe(&mut self, seed: u32, notes: u32, seconds: f64) -> Result<String, JsError> {
        json(self.session.transcribe(seed as u64, notes as usize, seconds))
    }

    /// Onsets, estimated notes and scores at threshold `delta`.
    pub fn pick(&self, delta: f64) -> Result<String, JsError> {
        json(self.session.pick(delta))
    }
}
