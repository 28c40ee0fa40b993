use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use jdsep::{
    init_random, init_spatial_cluster, push_scms, read_wav, run_method, sample_covs, write_wav, Bundle, Method, Stft,
    WavEncoding,
};

use crate::files::{self, write_json};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Cluster,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SeparateArgs {
    /// Multichannel input WAV (at least two channels).
    pub input: PathBuf,
    /// Output directory, created if missing.
    pub out_dir: PathBuf,
    #[arg(long, default_value = "fastfca-mm")]
    pub method: Method,
    /// Number of sources to extract.
    #[arg(long, short = 'n', value_parser = clap::value_parser!(u32).range(1..))]
    pub sources: u32,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, value_enum, default_value = "cluster")]
    pub init: InitKind,
    /// STFT frame length in samples (power of two).
    #[arg(long, default_value_t = 1024)]
    pub frame: usize,
    #[arg(long, default_value_t = 512)]
    pub shift: usize,
    /// Frames pooled into one covariance and one power value.
    #[arg(long, default_value_t = 1)]
    pub block: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a mono downmix of every source image.
    #[arg(long)]
    pub downmix: bool,
}

#[derive(Serialize)]
struct Timings {
    read_secs: f64,
    stft_secs: f64,
    init_secs: f64,
    fit_secs: f64,
    separate_secs: f64,
    total_secs: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a SeparateArgs,
    channels: usize,
    samples: usize,
    sample_rate: u32,
    freqs: usize,
    frames: usize,
    blocks: usize,
    workers: usize,
    init_floored: bool,
    nll_trace: Vec<f64>,
    nll_nonincreasing: bool,
    rtf: f64,
    timings: Timings,
    outputs: Vec<String>,
}

pub fn run(args: &SeparateArgs, write_audio: bool) -> Result<()> {
    let start = Instant::now();
    let sources = args.sources as usize;
    let stft = Stft::new(args.frame, args.shift).map_err(|e| UsageError(e.to_string()))?;
    if args.block == 0 {
        return Err(UsageError("--block must be at least 1".into()).into());
    }

    let wave = read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let dim = wave.channels();
    if dim < 2 {
        return Err(UsageError(format!(
            "{} has {dim} channel; at least 2 are needed",
            args.input.display()
        ))
        .into());
    }
    if args.method == Method::Ica && (sources != dim || args.block < dim) {
        return Err(UsageError(format!("ica needs --sources {dim} and --block >= {dim}")).into());
    }
    let read_secs = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let spec = stft.analyze(&wave)?;
    let covs = sample_covs(&spec, args.block)?;
    let stft_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let init = match args.init {
        InitKind::Cluster => init_spatial_cluster(&spec, sources, args.block, args.seed)?,
        InitKind::Random => {
            let mut init = init_random(covs.freqs(), covs.blocks(), dim, sources, args.seed)?;
            init.match_data_power(&covs)?;
            init
        }
    };
    let init_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let run = run_method(args.method, &covs, &init, args.iters, args.seed)?;
    let fit_secs = t.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut outputs = Vec::new();
    let t = Instant::now();
    if write_audio {
        let images = run.estimate.separate(&spec, args.block)?;
        for (n, img) in images.iter().enumerate() {
            let out = stft.synthesize(img, wave.len(), wave.sample_rate())?;
            write_wav(args.out_dir.join(files::source_wav(n)), &out, WavEncoding::Float32)?;
            outputs.push(files::source_wav(n));
            if args.downmix {
                write_wav(
                    args.out_dir.join(files::source_mono_wav(n)),
                    &out.downmix(),
                    WavEncoding::Float32,
                )?;
                outputs.push(files::source_mono_wav(n));
            }
        }
    }
    let separate_secs = t.elapsed().as_secs_f64();

    let mut bundle = Bundle::new(serde_json::json!({ "method": args.method, "frame": args.frame }));
    push_scms(&mut bundle, "scms", &run.estimate.scms()?)?;
    bundle.write(&args.out_dir, files::ESTIMATE_STEM)?;
    outputs.push(format!("{}.json", files::ESTIMATE_STEM));

    let nll_nonincreasing = run.nll_trace.windows(2).all(|w| w[1] - w[0] <= 1e-8 * w[0].abs());
    let report = RunReport {
        config: args,
        channels: dim,
        samples: wave.len(),
        sample_rate: wave.sample_rate(),
        freqs: spec.freqs(),
        frames: spec.frames(),
        blocks: covs.blocks(),
        workers: rayon::current_num_threads(),
        init_floored: init.floored,
        nll_trace: run.nll_trace,
        nll_nonincreasing,
        rtf: fit_secs / wave.duration_secs(),
        timings: Timings {
            read_secs,
            stft_secs,
            init_secs,
            fit_secs,
            separate_secs,
            total_secs: start.elapsed().as_secs_f64(),
        },
        outputs,
    };
    write_json(&args.out_dir.join(files::RUN_REPORT), &report)
}
