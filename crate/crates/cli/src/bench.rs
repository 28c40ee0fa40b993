use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use jdsep::{
    init_oracle, match_scores, sample_covs, scm_error, si_sdr_spec, synth_scene, timed_run, JdPairing, Method,
    SceneConfig, SceneKind, NOMINAL_RATE,
};

use crate::UsageError;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "fca-em,fca-mm,fastfca-em,fastfca-mm,fastmnmf"
    )]
    pub methods: Vec<Method>,
    /// Microphone counts; one scene per value.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    pub channels: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub sources: usize,
    #[arg(long, default_value_t = 257)]
    pub freqs: usize,
    #[arg(long, default_value_t = 128)]
    pub frames: usize,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 1)]
    pub block: usize,
    #[arg(long, default_value = "jd_exact")]
    pub kind: SceneKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print JSON records instead of CSV.
    #[arg(long)]
    pub json: bool,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One CSV row.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub method: Method,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub iters: usize,
    pub nll_first: f64,
    pub nll_last: f64,
    pub rtf: f64,
    pub sdr_mean: f64,
    pub scm_error: f64,
}

#[derive(Debug, Clone, Serialize)]
struct BenchRecord {
    #[serde(flatten)]
    row: BenchRow,
    wall_secs: f64,
    per_iter_ms: f64,
    workers: usize,
}

fn measure(args: &BenchArgs, channels: usize) -> Result<Vec<BenchRecord>> {
    let scene = synth_scene(&SceneConfig::new(
        args.kind,
        channels,
        args.sources,
        args.freqs,
        args.frames,
        args.seed,
    ))
    .map_err(|e| UsageError(e.to_string()))?;
    let covs = sample_covs(&scene.mixture, args.block)?;
    let init = init_oracle(&scene.images, args.block, JdPairing::default())?;
    let truth = scene.truth.scms()?;
    let audio_secs = scene.duration_secs(NOMINAL_RATE);
    let mut out = Vec::new();
    for &method in &args.methods {
        let (run, wall_secs) = timed_run(method, &covs, &init, args.iters, args.seed)?;
        let images = run.estimate.separate(&scene.mixture, args.block)?;
        let sdr = match_scores(&images, &scene.images, si_sdr_spec)?;
        let row = BenchRow {
            method,
            m: channels,
            n: args.sources,
            i: args.freqs,
            j: args.frames,
            iters: args.iters,
            nll_first: run.nll_trace[0],
            nll_last: *run.nll_trace.last().expect("trace starts with the initial value"),
            rtf: wall_secs / audio_secs,
            sdr_mean: sdr.mean(),
            scm_error: scm_error(&run.estimate.scms()?, &truth)?.value,
        };
        let per_iter_ms = if args.iters == 0 {
            0.0
        } else {
            1e3 * wall_secs / args.iters as f64
        };
        out.push(BenchRecord {
            row,
            wall_secs,
            per_iter_ms,
            workers: rayon::current_num_threads(),
        });
    }
    Ok(out)
}

pub fn run(args: &BenchArgs) -> Result<()> {
    if args.methods.contains(&Method::Ica) && args.channels.iter().any(|&m| m != args.sources || args.block < m) {
        return Err(
            UsageError("ica needs --sources equal to every channel count and --block >= channels".into()).into(),
        );
    }
    if args.block == 0 {
        return Err(UsageError("--block must be at least 1".into()).into());
    }
    let mut records = Vec::new();
    for &m in &args.channels {
        records.extend(measure(args, m)?);
    }
    let text = if args.json {
        serde_json::to_string_pretty(&records)?
    } else {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &records {
            w.serialize(&r.row)?;
        }
        String::from_utf8(w.into_inner()?)?
    };
    print!("{text}");
    if args.json {
        println!();
    }
    if let Some(path) = &args.out {
        std::fs::write(path, &text)?;
    }
    Ok(())
}
