//! Shared fixtures for the criterion benches.

use jdsep::{init_oracle, sample_covs, synth_scene, Initialization, JdPairing, SampleCovSet, SceneConfig, SceneKind};

/// Covariances and oracle starting point of a jointly diagonalizable scene.
pub fn fixture(channels: usize, sources: usize, freqs: usize, frames: usize) -> (SampleCovSet, Initialization) {
    let scene = synth_scene(&SceneConfig::new(
        SceneKind::JdExact,
        channels,
        sources,
        freqs,
        frames,
        0,
    ))
    .expect("scene");
    let covs = sample_covs(&scene.mixture, 1).expect("covariances");
    let init = init_oracle(&scene.images, 1, JdPairing::default()).expect("init");
    (covs, init)
}
