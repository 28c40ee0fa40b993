use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use jdsep::{match_scores, read_scms, read_wav, scene_from_bundle, scm_error, si_sdr_wave, Bundle, MultichannelWave};

use crate::files::{self, read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Sdr,
    Scm,
    Nll,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory written by `separate`.
    pub estimates: PathBuf,
    /// Directory written by `synth`.
    pub truth: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sdr,scm,nll")]
    pub metrics: Vec<Metric>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SdrReport {
    /// Per reference image, SI-SDR of the matched estimate in dB.
    scores: Vec<f64>,
    /// `perm[n]` is the estimate matched with reference image `n`.
    perm: Vec<usize>,
    mean: f64,
    /// Mean SI-SDR of the unprocessed mixture against each image.
    mixture_mean: Option<f64>,
    improvement: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ScmReport {
    value: f64,
    perm: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct NllReport {
    first: f64,
    last: f64,
    iters: usize,
    nonincreasing: bool,
}

#[derive(Debug, Default, Serialize)]
struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    sdr: Option<SdrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scm: Option<ScmReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nll: Option<NllReport>,
}

#[derive(Deserialize)]
struct RunTrace {
    nll_trace: Vec<f64>,
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<MultichannelWave>> {
    paths
        .iter()
        .map(|p| read_wav(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn sdr(estimates: &Path, truth: &Path) -> Result<SdrReport> {
    let refs = read_all(&files::numbered(truth, files::image_wav))?;
    let ests = read_all(&files::numbered(estimates, files::source_wav))?;
    if refs.is_empty() {
        bail!("no {} in {}", files::image_wav(0), truth.display());
    }
    if ests.len() != refs.len() {
        bail!("{} estimates for {} reference images", ests.len(), refs.len());
    }
    let matched = match_scores(&ests, &refs, si_sdr_wave)?;
    let mixture_path = truth.join(files::MIXTURE_WAV);
    let mixture_mean = if mixture_path.is_file() {
        let mix = read_wav(&mixture_path)?;
        let base: Vec<f64> = refs
            .iter()
            .map(|r| si_sdr_wave(&mix, r))
            .collect::<jdsep::Result<_>>()?;
        Some(base.iter().sum::<f64>() / base.len() as f64)
    } else {
        None
    };
    Ok(SdrReport {
        mean: matched.mean(),
        improvement: mixture_mean.map(|b| matched.mean() - b),
        scores: matched.scores,
        perm: matched.perm,
        mixture_mean,
    })
}

fn scm(estimates: &Path, truth: &Path) -> Result<ScmReport> {
    let est = read_scms(&Bundle::read(estimates, files::ESTIMATE_STEM)?, "scms")?;
    let scene = scene_from_bundle(&Bundle::read(truth, files::TRUTH_STEM)?)?;
    let err = scm_error(&est, &scene.truth.scms()?)
        .context("estimated and true SCMs disagree; was the STFT frame length the same?")?;
    Ok(ScmReport {
        value: err.value,
        perm: err.perm,
    })
}

fn nll(estimates: &Path) -> Result<NllReport> {
    let run: RunTrace = read_json(&estimates.join(files::RUN_REPORT))?;
    let (Some(&first), Some(&last)) = (run.nll_trace.first(), run.nll_trace.last()) else {
        bail!("empty likelihood trace");
    };
    Ok(NllReport {
        first,
        last,
        iters: run.nll_trace.len() - 1,
        nonincreasing: run.nll_trace.windows(2).all(|w| w[1] - w[0] <= 1e-8 * w[0].abs()),
    })
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let mut report = EvalReport::default();
    for m in &args.metrics {
        match m {
            Metric::Sdr => report.sdr = Some(sdr(&args.estimates, &args.truth)?),
            Metric::Scm => report.scm = Some(scm(&args.estimates, &args.truth)?),
            Metric::Nll => report.nll = Some(nll(&args.estimates)?),
        }
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}
