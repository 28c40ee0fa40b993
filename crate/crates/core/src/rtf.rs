//! Real-time factor measurement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::init::{init_oracle, Initialization, JdPairing};
use crate::model::{sample_covs, SampleCovSet};
use crate::pipeline::{run_method, Method, MethodRun};
use crate::synth::SyntheticScene;

/// Sample rate used to turn a scene's STFT size into seconds of audio.
pub const NOMINAL_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtfReport {
    pub method: Method,
    pub iters: usize,
    pub wall_secs: f64,
    pub audio_secs: f64,
    pub rtf: f64,
    pub per_iter_ms: f64,
    pub workers: usize,
    pub nll_trace: Vec<f64>,
}

/// Runs `method` and returns the run with its wall time in seconds.
pub fn timed_run(
    method: Method,
    covs: &SampleCovSet,
    init: &Initialization,
    iters: usize,
    seed: u64,
) -> Result<(MethodRun, f64)> {
    let start = Instant::now();
    let run = run_method(method, covs, init, iters, seed)?;
    Ok((run, start.elapsed().as_secs_f64()))
}

/// Times `iters` iterations of `method` on `scene`, starting from the oracle
/// initialization. Covariance estimation and initialization are not timed.
pub fn rtf_benchmark(method: Method, scene: &SyntheticScene, iters: usize, block_size: usize) -> Result<RtfReport> {
    let covs = sample_covs(&scene.mixture, block_size)?;
    let init = init_oracle(&scene.images, block_size, JdPairing::default())?;
    let (run, wall_secs) = timed_run(method, &covs, &init, iters, scene.config.seed)?;
    let audio_secs = scene.duration_secs(NOMINAL_RATE);
    Ok(RtfReport {
        method,
        iters,
        wall_secs,
        audio_secs,
        rtf: wall_secs / audio_secs,
        per_iter_ms: if iters == 0 {
            0.0
        } else {
            1e3 * wall_secs / iters as f64
        },
        workers: rayon::current_num_threads(),
        nll_trace: run.nll_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_scene, SceneConfig, SceneKind};

    #[test]
    fn zero_iterations_cost_little() {
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 2, 17, 32, 1)).unwrap();
        let r = rtf_benchmark(Method::FastfcaMm, &scene, 0, 1).unwrap();
        assert_eq!(r.nll_trace.len(), 1);
        assert_eq!(r.per_iter_ms, 0.0);
        assert!(r.wall_secs < 0.5);
        assert!((r.audio_secs - 32.0 * 16.0 / 16000.0).abs() < 1e-12);
    }
}
