//! Output naming and small I/O helpers shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const RUN_REPORT: &str = "run.json";
pub const SCENE_SUMMARY: &str = "scene.json";
pub const MIXTURE_WAV: &str = "mixture.wav";
/// Bundle stem of the ground truth written by `synth`.
pub const TRUTH_STEM: &str = "truth";
/// Bundle stem of the fitted SCMs written by `separate` and `fit`.
pub const ESTIMATE_STEM: &str = "estimate";

pub fn source_wav(n: usize) -> String {
    format!("source_{n}.wav")
}

pub fn source_mono_wav(n: usize) -> String {
    format!("source_{n}_mono.wav")
}

pub fn image_wav(n: usize) -> String {
    format!("image_{n}.wav")
}

/// `dir/<name(0)>`, `dir/<name(1)>`, ... up to the first missing index.
pub fn numbered(dir: &Path, name: impl Fn(usize) -> String) -> Vec<PathBuf> {
    (0..).map(|n| dir.join(name(n))).take_while(|p| p.is_file()).collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
