//! Multichannel blind source separation with full-rank and jointly
//! diagonalizable spatial covariance models.

pub mod bundle;
pub mod error;
pub mod fastfca;
pub mod fastmnmf;
pub mod fca;
pub mod init;
pub mod linalg;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod random;
pub mod rtf;
pub mod stft;
pub mod synth;
pub mod wav;

pub use bundle::{
    push_scms, push_spectrograms, read_scms, read_spectrograms, scene_bundle, scene_from_bundle, Bundle, DType,
    TensorEntry,
};
pub use error::{Error, Result};
pub use fastfca::{
    ajd_cost, align_permutations, fastfca_fit, fastfca_mwf, fastfca_separate, ica_mode_fit, ip_update_w,
    piecewise_prepare, wiener_gains, FastFcaFit, NmfFlavor,
};
pub use fastmnmf::{
    fastmnmf_fit, fastmnmf_init_from_fastfca, fastmnmf_nll, fastmnmf_separate, is_nmf, FastMnmfFit, FastMnmfParams,
    NmfFactors,
};
pub use fca::{
    fca_em_step, fca_fit, fca_mm_step, fca_separate, mwf_filter, EmPowerUsage, FcaAlgorithm, FcaFit, MwfFilter,
};
pub use init::{
    cluster_labels, init_from_scms, init_oracle, init_random, init_spatial_cluster, Initialization, JdPairing,
};
pub use linalg::{
    condition_number, ddiag, eigh, exact_jd_pair, geometric_mean, hermitize, is_divergence, logdet_divergence,
    matrix_power, real_diag, CMat, CVec, DiagonalPd, HermitianPd, JointDiagonalizer, RMat,
};
pub use matching::min_cost_assignment;
pub use metrics::{match_scores, scm_error, si_sdr, si_sdr_complex, si_sdr_spec, si_sdr_wave, MatchedScores, ScmError};
pub use model::{
    decorrelated_powers, decorrelated_stats, fastfca_nll, fca_nll, sample_covs, DecorrelatedStats, FastFcaBin,
    FastFcaParams, FcaBin, FcaParams, SampleCovSet,
};
pub use pipeline::{run_method, Estimate, Method, MethodRun};
pub use rtf::{rtf_benchmark, timed_run, RtfReport, NOMINAL_RATE};
pub use stft::{istft, stft, MultichannelWave, Padding, Spectrogram, Stft};
pub use synth::{synth_scene, SceneConfig, SceneKind, SceneTruth, SyntheticScene};
pub use wav::{read_wav, write_wav, WavEncoding};

#[cfg(test)]
pub(crate) mod testutil {
    pub use crate::random::{random_fastfca, random_fca, random_hpd, random_spec};
}
