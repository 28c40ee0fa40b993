//! Synthetic scenes drawn from the generative models.

use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitize, real_diag, trace_re, CMat, CVec, RMat};
use crate::model::{FastFcaBin, FastFcaParams, FcaBin, FcaParams};
use crate::random::{complex_gaussian_matrix, complex_normal, log_uniform, random_nonsingular, standard_normal};
use crate::stft::Spectrogram;

/// Condition-number bound for drawn mixing and decorrelation matrices.
pub const MAX_CONDITION: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// SCMs exactly jointly diagonalizable per frequency.
    JdExact,
    /// Unconstrained full-rank SCMs.
    Fullrank,
    /// Frequency-independent rank-one mixing, `N = M`.
    Instantaneous,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jd_exact" | "jd-exact" => Ok(Self::JdExact),
            "fullrank" | "full-rank" => Ok(Self::Fullrank),
            "instantaneous" => Ok(Self::Instantaneous),
            _ => Err(Error::InvalidParameter(format!("unknown scene kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::JdExact => "jd_exact",
            Self::Fullrank => "fullrank",
            Self::Instantaneous => "instantaneous",
        })
    }
}

/// Ground truth parameters of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneTruth {
    Jd(FastFcaParams),
    FullRank(FcaParams),
    /// `mixing` columns are the steering vectors `a_n`; `params` holds
    /// `W = A^-H` with one-hot loadings.
    Instantaneous {
        mixing: CMat,
        params: FastFcaParams,
    },
}

impl SceneTruth {
    /// SCMs indexed `[i][n]`.
    pub fn scms(&self) -> Result<Vec<Vec<CMat>>> {
        match self {
            SceneTruth::Jd(p) | SceneTruth::Instantaneous { params: p, .. } => {
                p.bins.iter().map(|b| b.scms()).collect()
            }
            SceneTruth::FullRank(p) => Ok(p.bins.iter().map(|b| b.scms.clone()).collect()),
        }
    }

    pub fn fastfca(&self) -> Option<&FastFcaParams> {
        match self {
            SceneTruth::Jd(p) | SceneTruth::Instantaneous { params: p, .. } => Some(p),
            SceneTruth::FullRank(_) => None,
        }
    }

    /// Source power spectra `[i]` as `J × N`.
    pub fn powers(&self) -> Vec<RMat> {
        match self {
            SceneTruth::Jd(p) | SceneTruth::Instantaneous { params: p, .. } => {
                p.bins.iter().map(|b| b.acts.transpose()).collect()
            }
            SceneTruth::FullRank(p) => p.bins.iter().map(|b| b.powers.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub channels: usize,
    pub sources: usize,
    pub freqs: usize,
    pub frames: usize,
    pub seed: u64,
    /// AR(1) coefficient of the log-power envelopes along time, in `[0, 1)`.
    pub smoothness: f64,
}

impl SceneConfig {
    pub fn new(kind: SceneKind, channels: usize, sources: usize, freqs: usize, frames: usize, seed: u64) -> Self {
        Self {
            kind,
            channels,
            sources,
            freqs,
            frames,
            seed,
            smoothness: 0.8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub mixture: Spectrogram,
    pub images: Vec<Spectrogram>,
    pub truth: SceneTruth,
}

impl SyntheticScene {
    /// Nominal duration assuming a half-overlap STFT with `2(I-1)`-point frames.
    pub fn duration_secs(&self, sample_rate: u32) -> f64 {
        let shift = self.config.freqs.saturating_sub(1).max(1);
        (self.config.frames * shift) as f64 / sample_rate as f64
    }
}

/// Log-normal envelopes: a source-level activity shared by all frequencies
/// plus per-bin fluctuations, both AR(1)-smoothed along time.
fn envelopes(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Vec<RMat> {
    let rho = cfg.smoothness;
    let innov = (1.0 - rho * rho).sqrt();
    let ar = |rng: &mut ChaCha8Rng, len: usize| {
        let mut x = standard_normal(rng);
        (0..len)
            .map(|_| {
                let v = x;
                x = rho * x + innov * standard_normal(rng);
                v
            })
            .collect::<Vec<f64>>()
    };
    let activity: Vec<Vec<f64>> = (0..cfg.sources).map(|_| ar(rng, cfg.frames)).collect();
    let tilt: Vec<f64> = (0..cfg.sources).map(|_| log_uniform(rng, 0.5, 2.0)).collect();
    (0..cfg.freqs)
        .map(|i| {
            let mut h = RMat::zeros(cfg.frames, cfg.sources);
            for n in 0..cfg.sources {
                let local = ar(rng, cfg.frames);
                let spectral = -tilt[n] * (1.0 + i as f64).ln() * 0.5;
                for j in 0..cfg.frames {
                    h[(j, n)] = (1.5 * activity[n][j] + 0.5 * local[j] + spectral).exp();
                }
            }
            h
        })
        .collect()
}

fn draw_image(rng: &mut ChaCha8Rng, factor: &CMat, power: f64) -> CVec {
    let z = CVec::from_fn(factor.ncols(), |_, _| complex_normal(rng));
    factor * z * Complex64::new(power.sqrt(), 0.0)
}

pub fn synth_scene(cfg: &SceneConfig) -> Result<SyntheticScene> {
    let SceneConfig {
        kind,
        channels: m,
        sources: n,
        freqs,
        frames,
        ..
    } = *cfg;
    if m < 1 || n < 1 || freqs < 1 || frames < 1 {
        return Err(Error::InvalidParameter("scene dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.smoothness) {
        return Err(Error::InvalidParameter("smoothness must lie in [0, 1)".into()));
    }
    if kind == SceneKind::Instantaneous && n != m {
        return Err(Error::InvalidParameter("instantaneous scenes need N = M".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let powers = envelopes(&mut rng, cfg);
    let mixing = (kind == SceneKind::Instantaneous).then(|| random_nonsingular(&mut rng, m, MAX_CONDITION));

    // per bin: SCM square-root factors and truth parameters
    let mut factors: Vec<Vec<CMat>> = Vec::with_capacity(freqs);
    let mut jd_bins = Vec::new();
    let mut fr_bins = Vec::new();
    for power in powers.iter() {
        match kind {
            SceneKind::JdExact => {
                let w = random_nonsingular(&mut rng, m, MAX_CONDITION);
                let loadings = RMat::from_fn(m, n, |_, _| log_uniform(&mut rng, 0.01, 1.0));
                let winv_h = w
                    .clone()
                    .try_inverse()
                    .ok_or(Error::Singular {
                        condition: f64::INFINITY,
                    })?
                    .adjoint();
                factors.push(
                    (0..n)
                        .map(|k| {
                            let sd: Vec<f64> = loadings.column(k).iter().map(|v| v.sqrt()).collect();
                            &winv_h * real_diag(&sd)
                        })
                        .collect(),
                );
                jd_bins.push(FastFcaBin {
                    w,
                    loadings,
                    acts: power.transpose(),
                });
            }
            SceneKind::Fullrank => {
                let scms: Vec<CMat> = (0..n)
                    .map(|_| {
                        let a = complex_gaussian_matrix(&mut rng, m, m);
                        let mut r = (&a * a.adjoint()).unscale(m as f64);
                        for k in 0..m {
                            r[(k, k)] += Complex64::new(0.05, 0.0);
                        }
                        let r = hermitize(&r);
                        r.unscale(trace_re(&r) / m as f64)
                    })
                    .collect();
                factors.push(
                    scms.iter()
                        .map(|r| {
                            r.clone()
                                .cholesky()
                                .map(|c| c.unpack())
                                .ok_or_else(|| Error::NotPositiveDefinite("drawn SCM".into()))
                        })
                        .collect::<Result<_>>()?,
                );
                fr_bins.push(FcaBin {
                    scms,
                    powers: power.clone(),
                });
            }
            SceneKind::Instantaneous => {
                let a = mixing.as_ref().expect("drawn above");
                factors.push((0..n).map(|k| CMat::from_columns(&[a.column(k)])).collect());
                let w = a
                    .clone()
                    .try_inverse()
                    .ok_or(Error::Singular {
                        condition: f64::INFINITY,
                    })?
                    .adjoint();
                jd_bins.push(FastFcaBin {
                    w,
                    loadings: RMat::identity(m, n),
                    acts: power.transpose(),
                });
            }
        }
    }

    let mut images = vec![Spectrogram::zeros(m, freqs, frames); n];
    for (i, bin_factors) in factors.iter().enumerate() {
        for j in 0..frames {
            for (k, f) in bin_factors.iter().enumerate() {
                images[k].set_vector(i, j, &draw_image(&mut rng, f, powers[i][(j, k)]));
            }
        }
    }
    let mut mixture = Spectrogram::zeros(m, freqs, frames);
    for (i, j) in (0..freqs).flat_map(|i| (0..frames).map(move |j| (i, j))) {
        let x = images
            .iter()
            .fold(DVector::zeros(m), |acc: CVec, img| acc + img.vector(i, j));
        mixture.set_vector(i, j, &x);
    }
    let truth = match kind {
        SceneKind::JdExact => SceneTruth::Jd(FastFcaParams { bins: jd_bins }),
        SceneKind::Fullrank => SceneTruth::FullRank(FcaParams { bins: fr_bins }),
        SceneKind::Instantaneous => SceneTruth::Instantaneous {
            mixing: mixing.expect("drawn above"),
            params: FastFcaParams { bins: jd_bins },
        },
    };
    Ok(SyntheticScene {
        config: *cfg,
        mixture,
        images,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fro;

    #[test]
    fn mixture_is_image_sum() {
        for kind in [SceneKind::JdExact, SceneKind::Fullrank, SceneKind::Instantaneous] {
            let s = synth_scene(&SceneConfig::new(kind, 2, 2, 5, 20, 1)).unwrap();
            let sum = Spectrogram::sum(&s.images).unwrap();
            assert_eq!(sum, s.mixture);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SceneConfig::new(SceneKind::JdExact, 3, 2, 4, 10, 7);
        let a = synth_scene(&cfg).unwrap();
        let b = synth_scene(&cfg).unwrap();
        assert_eq!(a.mixture, b.mixture);
        assert_eq!(a.truth, b.truth);
        let c = synth_scene(&SceneConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.mixture, c.mixture);
    }

    #[test]
    fn decorrelated_images_are_nearly_diagonal() {
        let s = synth_scene(&SceneConfig {
            smoothness: 0.0,
            ..SceneConfig::new(SceneKind::JdExact, 3, 2, 1, 2000, 3)
        })
        .unwrap();
        let SceneTruth::Jd(p) = &s.truth else { panic!() };
        let w = &p.bins[0].w;
        for (n, img) in s.images.iter().enumerate() {
            // whiten by the known power so the sample mean estimates Λ_n
            let mut acc = CMat::zeros(3, 3);
            for j in 0..2000 {
                let y = w.adjoint() * img.vector(0, j);
                acc += (&y * y.adjoint()).unscale(p.bins[0].acts[(n, j)]);
            }
            let on = (0..3).map(|k| acc[(k, k)].norm()).fold(0.0, f64::max);
            let off = (0..3)
                .flat_map(|r| (0..3).map(move |c| (r, c)))
                .filter(|(r, c)| r != c)
                .map(|(r, c)| acc[(r, c)].norm())
                .fold(0.0, f64::max);
            assert!(off / on <= 0.1, "{}", off / on);
        }
    }

    #[test]
    fn truth_scms_are_consistent() {
        let s = synth_scene(&SceneConfig::new(SceneKind::Instantaneous, 2, 2, 3, 5, 2)).unwrap();
        let SceneTruth::Instantaneous { mixing, .. } = &s.truth else {
            panic!()
        };
        let scms = s.truth.scms().unwrap();
        let a0 = mixing.column(0);
        assert!(fro(&(&scms[1][0] - a0 * a0.adjoint())) < 1e-10);
        let f = synth_scene(&SceneConfig::new(SceneKind::Fullrank, 3, 2, 2, 5, 2)).unwrap();
        for r in f.truth.scms().unwrap().iter().flatten() {
            assert!((trace_re(r) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(synth_scene(&SceneConfig::new(SceneKind::JdExact, 0, 2, 3, 5, 0)).is_err());
        assert!(synth_scene(&SceneConfig::new(SceneKind::Instantaneous, 2, 3, 3, 5, 0)).is_err());
        assert!("bogus".parse::<SceneKind>().is_err());
        assert_eq!("jd_exact".parse::<SceneKind>().unwrap(), SceneKind::JdExact);
    }
}
