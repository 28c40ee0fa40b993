use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use jdsep::{scene_bundle, synth_scene, write_wav, SceneConfig, SceneKind, Stft, WavEncoding};

use crate::files::{self, write_json};
use crate::UsageError;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    pub out_dir: PathBuf,
    #[arg(long, default_value = "jd_exact")]
    pub kind: SceneKind,
    #[arg(long, default_value_t = 2)]
    pub channels: usize,
    #[arg(long, default_value_t = 2)]
    pub sources: usize,
    /// Frequency bins; the frame length is `2 (freqs - 1)`, a power of two.
    #[arg(long, default_value_t = 513)]
    pub freqs: usize,
    #[arg(long, default_value_t = 250)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// AR(1) coefficient of the log-power envelopes.
    #[arg(long, default_value_t = 0.8)]
    pub smoothness: f64,
    #[arg(long, default_value_t = 16_000)]
    pub rate: u32,
}

/// Human-readable description of a synthesized scene.
#[derive(Debug, Clone, Serialize)]
pub struct SceneSummary {
    pub config: SceneConfig,
    pub sample_rate: u32,
    pub frame: usize,
    pub shift: usize,
    pub samples: usize,
    pub duration_secs: f64,
    pub image_energy: Vec<f64>,
    pub files: Vec<String>,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let frame = 2 * args.freqs.saturating_sub(1);
    let stft = Stft::new(frame, frame / 2).map_err(|_| UsageError(format!("--freqs {} is not 2^k + 1", args.freqs)))?;
    let config = SceneConfig {
        smoothness: args.smoothness,
        ..SceneConfig::new(
            args.kind,
            args.channels,
            args.sources,
            args.freqs,
            args.frames,
            args.seed,
        )
    };
    let scene = synth_scene(&config).map_err(|e| UsageError(e.to_string()))?;

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let samples = stft.samples_for(args.frames);
    let mut names = Vec::new();
    let mut image_energy = Vec::new();
    let mixture = stft.synthesize(&scene.mixture, samples, args.rate)?;
    write_wav(args.out_dir.join(files::MIXTURE_WAV), &mixture, WavEncoding::Float32)?;
    names.push(files::MIXTURE_WAV.to_owned());
    for (n, img) in scene.images.iter().enumerate() {
        let wave = stft.synthesize(img, samples, args.rate)?;
        image_energy.push(wave.samples().iter().flatten().map(|v| v * v).sum());
        write_wav(args.out_dir.join(files::image_wav(n)), &wave, WavEncoding::Float32)?;
        names.push(files::image_wav(n));
    }
    scene_bundle(&scene)?.write(&args.out_dir, files::TRUTH_STEM)?;
    names.push(format!("{}.json", files::TRUTH_STEM));
    names.push(format!("{}.bin", files::TRUTH_STEM));

    let summary = SceneSummary {
        config,
        sample_rate: args.rate,
        frame,
        shift: frame / 2,
        samples,
        duration_secs: samples as f64 / args.rate as f64,
        image_energy,
        files: names,
    };
    write_json(&args.out_dir.join(files::SCENE_SUMMARY), &summary)
}
