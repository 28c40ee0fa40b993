//! Parameter initialization: from known source images, from spatial
//! clustering of the mixture, or at random.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastfca::align_permutations;
use crate::linalg::{exact_jd_pair, floor_pd, hermitize, inv_hpd, trace_re, CMat, CVec, HermitianPd, RMat};
use crate::model::{sample_covs, FastFcaBin, FastFcaParams, FcaBin, FcaParams, SampleCovSet, POWER_FLOOR};
use crate::random::{complex_gaussian_matrix, log_uniform};
use crate::stft::Spectrogram;

/// Pair of matrices handed to the generalized eigensolver for `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JdPairing {
    /// `(R_1, Σ_{n≥2} R_n)`.
    #[default]
    FirstVersusRest,
    /// `(R_1, R_2)`.
    FirstTwo,
}

/// Matching full-rank and jointly diagonalizable starting points.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub fca: FcaParams,
    pub fastfca: FastFcaParams,
    /// Some SCM estimate needed an eigenvalue floor.
    pub floored: bool,
}

impl Initialization {
    /// Multiplies every power by `factor`.
    pub fn rescale_powers(&mut self, factor: f64) {
        for b in &mut self.fca.bins {
            b.powers *= factor;
        }
        for b in &mut self.fastfca.bins {
            b.acts *= factor;
        }
    }

    /// Rescales every bin's powers so the average model power per channel
    /// equals that of `covs`. Needed after [`init_random`].
    pub fn match_data_power(&mut self, covs: &SampleCovSet) -> Result<()> {
        self.fca.check_against(covs)?;
        self.fastfca.check_against(covs)?;
        let dim = covs.dim() as f64;
        for (i, b) in self.fca.bins.iter_mut().enumerate() {
            let model: f64 = (0..b.scms.len())
                .map(|n| b.powers.column(n).mean() * trace_re(&b.scms[n]))
                .sum::<f64>()
                / dim;
            if model > 0.0 && covs.mean_power(i) > 0.0 {
                b.powers *= covs.mean_power(i) / model;
            }
        }
        for (i, b) in self.fastfca.bins.iter_mut().enumerate() {
            let scms = b.scms()?;
            let model: f64 = (0..scms.len())
                .map(|n| b.acts.row(n).mean() * trace_re(&scms[n]))
                .sum::<f64>()
                / dim;
            if model > 0.0 && covs.mean_power(i) > 0.0 {
                b.acts *= covs.mean_power(i) / model;
            }
        }
        Ok(())
    }
}

/// `W` whose columns diagonalize the SCMs of one bin.
fn decorrelator(scms: &[CMat], pairing: JdPairing) -> Result<CMat> {
    let m = scms[0].nrows();
    if scms.len() == 1 {
        // whiten the only SCM: W = L^-H with R = L L^H
        let chol = hermitize(&scms[0])
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("SCM".into()))?;
        return chol
            .l()
            .adjoint()
            .solve_upper_triangular(&CMat::identity(m, m))
            .ok_or(Error::Singular {
                condition: f64::INFINITY,
            });
    }
    let second = match pairing {
        JdPairing::FirstVersusRest => scms[1..].iter().fold(CMat::zeros(m, m), |a, r| a + r),
        JdPairing::FirstTwo => scms[1].clone(),
    };
    let jd = exact_jd_pair(&HermitianPd::new(scms[0].clone())?, &HermitianPd::new(second)?)?;
    Ok(jd.w)
}

/// Builds both parameter sets from per-bin SCMs (`[i][n]`) and powers
/// (`[i]`, blocks × sources).
pub fn init_from_scms(scms: &[Vec<CMat>], powers: &[RMat], pairing: JdPairing) -> Result<Initialization> {
    if scms.len() != powers.len() || scms.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: scms.len(),
            actual: powers.len(),
        });
    }
    let mut floored = false;
    let mut fca_bins = Vec::with_capacity(scms.len());
    let mut jd_bins = Vec::with_capacity(scms.len());
    for (bin_scms, h) in scms.iter().zip(powers) {
        let m = bin_scms[0].nrows();
        let mut normalized = Vec::with_capacity(bin_scms.len());
        let mut h = h.clone();
        for (n, r) in bin_scms.iter().enumerate() {
            let (r, f) = floor_pd(r)?;
            floored |= f;
            let s = trace_re(&r) / m as f64;
            normalized.push(r.unscale(s));
            h.column_mut(n).scale_mut(s);
        }
        let floor = POWER_FLOOR * h.mean().max(f64::MIN_POSITIVE);
        h.iter_mut().for_each(|v| *v = v.max(floor));
        let w = decorrelator(&normalized, pairing)?;
        let loadings = RMat::from_fn(m, normalized.len(), |k, n| {
            let col = w.column(k);
            (col.adjoint() * &normalized[n] * col)[(0, 0)].re.max(POWER_FLOOR)
        });
        jd_bins.push(FastFcaBin {
            w,
            loadings,
            acts: h.transpose(),
        });
        fca_bins.push(FcaBin {
            scms: normalized,
            powers: h,
        });
    }
    Ok(Initialization {
        fca: FcaParams { bins: fca_bins },
        fastfca: FastFcaParams { bins: jd_bins },
        floored,
    })
}

/// Soft-masked powers `h_jn = M_jn tr(R_n^-1 X̂_j) / M`.
fn masked_powers(covs: &[CMat], scms: &[CMat], masks: &RMat) -> Result<RMat> {
    let m = scms[0].nrows() as f64;
    let rinv: Vec<CMat> = scms
        .iter()
        .map(|r| inv_hpd(&floor_pd(r)?.0).ok_or_else(|| Error::NotPositiveDefinite("SCM".into())))
        .collect::<Result<_>>()?;
    Ok(RMat::from_fn(covs.len(), scms.len(), |j, n| {
        masks[(j, n)] * trace_re(&(&rinv[n] * &covs[j])) / m
    }))
}

/// Initializes from the true source images of a synthetic scene.
pub fn init_oracle(images: &[Spectrogram], block_size: usize, pairing: JdPairing) -> Result<Initialization> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("no source images".into()))?;
    if images.iter().any(|s| !s.same_shape(first)) {
        return Err(Error::Shape("source images differ in shape".into()));
    }
    let mixture = Spectrogram::sum(images)?;
    let covs = sample_covs(&mixture, block_size)?;
    let image_covs: Vec<SampleCovSet> = images
        .iter()
        .map(|s| sample_covs(s, block_size))
        .collect::<Result<_>>()?;
    let frames = first.frames();
    let (scms, powers): (Vec<Vec<CMat>>, Vec<RMat>) = (0..first.freqs())
        .into_par_iter()
        .map(|i| {
            let scms: Vec<CMat> = (0..images.len())
                .map(|n| {
                    let mut acc = CMat::zeros(first.channels(), first.channels());
                    for j in 0..frames {
                        let c = images[n].vector(i, j);
                        acc += &c * c.adjoint();
                    }
                    hermitize(&acc.unscale(frames as f64))
                })
                .collect();
            // soft mask: each source's share of the block energy
            let masks = RMat::from_fn(covs.blocks(), images.len(), |j, n| {
                let total: f64 = image_covs.iter().map(|c| trace_re(c.get(i, j))).sum();
                if total > 0.0 {
                    trace_re(image_covs[n].get(i, j)) / total
                } else {
                    1.0 / images.len() as f64
                }
            });
            let safe: Vec<CMat> = scms.iter().map(floor_or_identity).collect();
            masked_powers(covs.bin(i), &safe, &masks).map(|h| (scms, h))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    init_from_scms(&scms, &powers, pairing)
}

fn floor_or_identity(r: &CMat) -> CMat {
    floor_pd(r)
        .map(|(r, _)| r)
        .unwrap_or_else(|_| CMat::identity(r.nrows(), r.nrows()))
}

/// Unit-norm copy of `x` rotated so its first entry is real and nonnegative.
fn phase_aligned(x: &CVec) -> Option<CVec> {
    let norm = x.norm();
    if !(norm > 0.0) {
        return None;
    }
    let phase = if x[0].norm() > 0.0 {
        x[0].conj() / x[0].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    Some(x * (phase / norm))
}

/// Lloyd's algorithm with k-means++ seeding; empty clusters are reseeded at
/// the point farthest from its centroid.
fn kmeans(points: &[CVec], k: usize, rng: &mut ChaCha8Rng, iters: usize) -> Vec<usize> {
    let dist = |a: &CVec, b: &CVec| (a - b).norm_squared();
    let mut centers: Vec<CVec> = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            d.iter()
                .position(|&v| {
                    target -= v;
                    target <= 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
    }
    let mut labels = vec![0; points.len()];
    for _ in 0..iters {
        let mut changed = false;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let best = (0..k)
                .min_by(|&a, &b| dist(p, &centers[a]).total_cmp(&dist(p, &centers[b])))
                .unwrap_or(0);
            changed |= best != *label;
            *label = best;
        }
        let mut sums = vec![CVec::zeros(points[0].len()); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p;
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist(&points[a], &centers[labels[a]]).total_cmp(&dist(&points[b], &centers[labels[b]]))
                    })
                    .unwrap_or(0);
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].unscale(counts[c] as f64);
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Weight given to non-winning clusters in the soft masks.
const MASK_SOFTNESS: f64 = 0.1;

/// Hard k-means labels per bin and frame; `None` marks silent frames.
pub fn cluster_labels(spec: &Spectrogram, sources: usize, seed: u64) -> Result<Vec<Vec<Option<usize>>>> {
    if sources < 1 {
        return Err(Error::InvalidParameter("need at least one source".into()));
    }
    if !(spec.energy() > 0.0) {
        return Err(Error::InvalidParameter("input is silent".into()));
    }
    (0..spec.freqs())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let aligned: Vec<Option<CVec>> = (0..spec.frames()).map(|j| phase_aligned(&spec.vector(i, j))).collect();
            let points: Vec<CVec> = aligned.iter().flatten().cloned().collect();
            if points.is_empty() || sources == 1 {
                return Ok(aligned.iter().map(|p| p.as_ref().map(|_| 0)).collect());
            }
            let labels = kmeans(&points, sources.min(points.len()), &mut rng, 50);
            let mut it = labels.into_iter();
            Ok(aligned.iter().map(|p| p.as_ref().and_then(|_| it.next())).collect())
        })
        .collect()
}

/// Spatial clustering initializer: k-means masks, masked SCMs, joint
/// diagonalization, then cross-frequency alignment of the activations.
pub fn init_spatial_cluster(
    spec: &Spectrogram,
    sources: usize,
    block_size: usize,
    seed: u64,
) -> Result<Initialization> {
    let labels = cluster_labels(spec, sources, seed)?;
    let covs = sample_covs(spec, block_size)?;
    let m = spec.channels();
    let soft = |l: Option<usize>, n: usize| match l {
        _ if sources == 1 => 1.0,
        Some(l) if l == n => 1.0 - MASK_SOFTNESS * (sources - 1) as f64 / sources as f64,
        Some(_) => MASK_SOFTNESS / sources as f64,
        None => 1.0 / sources as f64,
    };
    let (scms, powers): (Vec<Vec<CMat>>, Vec<RMat>) = (0..spec.freqs())
        .into_par_iter()
        .map(|i| {
            let scms: Vec<CMat> = (0..sources)
                .map(|n| {
                    let mut acc = CMat::zeros(m, m);
                    for (j, &l) in labels[i].iter().enumerate() {
                        let x = spec.vector(i, j);
                        acc += (&x * x.adjoint()).scale(soft(l, n));
                    }
                    let r = hermitize(&acc.unscale(spec.frames() as f64));
                    if trace_re(&r) > 0.0 {
                        r
                    } else {
                        CMat::identity(m, m)
                    }
                })
                .collect();
            let masks = RMat::from_fn(covs.blocks(), sources, |j, n| {
                let lo = j * block_size;
                let hi = (lo + block_size).min(spec.frames());
                (lo..hi).map(|t| soft(labels[i][t], n)).sum::<f64>() / (hi - lo) as f64
            });
            let safe: Vec<CMat> = scms.iter().map(floor_or_identity).collect();
            masked_powers(covs.bin(i), &safe, &masks).map(|h| (scms, h))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let mut init = init_from_scms(&scms, &powers, JdPairing::default())?;
    let perms = align_permutations(&mut init.fastfca);
    for (bin, perm) in init.fca.bins.iter_mut().zip(&perms) {
        bin.permute(perm);
    }
    Ok(init)
}

/// Random starting point: `W = I + 0.1 E`, log-uniform loadings and
/// activations, `R = I + PSD perturbation`. Deterministic in `seed`.
pub fn init_random(freqs: usize, blocks: usize, dim: usize, sources: usize, seed: u64) -> Result<Initialization> {
    if freqs == 0 || blocks == 0 || dim == 0 || sources == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fca_bins = Vec::with_capacity(freqs);
    let mut jd_bins = Vec::with_capacity(freqs);
    for _ in 0..freqs {
        let w = CMat::identity(dim, dim) + complex_gaussian_matrix(&mut rng, dim, dim).scale(0.1);
        let loadings = RMat::from_fn(dim, sources, |_, _| log_uniform(&mut rng, 0.1, 1.0));
        let acts = RMat::from_fn(sources, blocks, |_, _| log_uniform(&mut rng, 0.1, 1.0));
        jd_bins.push(FastFcaBin { w, loadings, acts });
        let scms = (0..sources)
            .map(|_| {
                let a = complex_gaussian_matrix(&mut rng, dim, dim);
                let r = hermitize(&(CMat::identity(dim, dim) + (&a * a.adjoint()).scale(0.1 / dim as f64)));
                r.unscale(trace_re(&r) / dim as f64)
            })
            .collect();
        let powers = RMat::from_fn(blocks, sources, |_, _| log_uniform(&mut rng, 0.1, 1.0));
        fca_bins.push(FcaBin { scms, powers });
    }
    Ok(Initialization {
        fca: FcaParams { bins: fca_bins },
        fastfca: FastFcaParams { bins: jd_bins },
        floored: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastfca::ajd_cost;
    use crate::linalg::fro;
    use crate::model::{fastfca_nll, fca_nll};
    use crate::synth::{synth_scene, SceneConfig, SceneKind, SceneTruth};

    #[test]
    fn random_init_matches_data_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw = crate::testutil::random_spec(&mut rng, 2, 3, 12);
        let spec = Spectrogram::from_fn(2, 3, 12, |m, i, j| raw.get(m, i, j) * (50.0 * (i + 1) as f64));
        let covs = sample_covs(&spec, 2).unwrap();
        let mut init = init_random(3, 6, 2, 2, 1).unwrap();
        init.match_data_power(&covs).unwrap();
        let jd = init.fastfca.to_fca().unwrap();
        for i in 0..3 {
            let model: f64 = (0..6).map(|j| trace_re(&jd.bins[i].mixture_cov(j))).sum::<f64>() / 12.0;
            assert!((model - covs.mean_power(i)).abs() < 1e-9 * model);
            let model: f64 = (0..6).map(|j| trace_re(&init.fca.bins[i].mixture_cov(j))).sum::<f64>() / 12.0;
            assert!((model - covs.mean_power(i)).abs() < 1e-9 * model);
        }
    }

    #[test]
    fn exact_truth_gives_zero_ajd_and_truth_loadings() {
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 3, 4, 4, 10, 1)).unwrap();
        let scms = scene.truth.scms().unwrap();
        let init = init_from_scms(&scms, &scene.truth.powers(), JdPairing::default()).unwrap();
        let SceneTruth::Jd(truth) = &scene.truth else { panic!() };
        for (i, b) in init.fastfca.bins.iter().enumerate() {
            assert!(ajd_cost(&b.w, &scms[i], &[1.0; 4]).unwrap() <= 1e-9);
            // W^H R_n W diagonal for every source
            for r in &scms[i] {
                let t = b.w.adjoint() * r * &b.w;
                let off: f64 = (0..3)
                    .flat_map(|a| (0..3).map(move |c| (a, c)))
                    .filter(|(a, c)| a != c)
                    .map(|(a, c)| t[(a, c)].norm())
                    .sum();
                assert!(off < 1e-9 * fro(&t));
            }
            // loading ratios across sources agree with the truth up to a channel permutation
            let ratio = |l: &RMat, m: usize| l[(m, 1)] / l[(m, 0)];
            // trace normalization rescales whole columns, so compare up to a common factor
            let unit = |v: Vec<f64>| {
                let g = (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp();
                v.into_iter().map(|x| x / g).collect::<Vec<f64>>()
            };
            let mut got = unit((0..3).map(|m| ratio(&b.loadings, m)).collect());
            let mut want = unit((0..3).map(|m| ratio(&truth.bins[i].loadings, m)).collect());
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-7 * w);
            }
        }
        // first pair only also diagonalizes when N = 2
        let two = synth_scene(&SceneConfig::new(SceneKind::JdExact, 3, 2, 2, 10, 2)).unwrap();
        let s2 = two.truth.scms().unwrap();
        let init = init_from_scms(&s2, &two.truth.powers(), JdPairing::FirstTwo).unwrap();
        assert!(ajd_cost(&init.fastfca.bins[0].w, &s2[0], &[1.0; 2]).unwrap() <= 1e-9);
    }

    #[test]
    fn oracle_init_is_valid() {
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 3, 4, 40, 3)).unwrap();
        let init = init_oracle(&scene.images, 4, JdPairing::default()).unwrap();
        let covs = sample_covs(&scene.mixture, 4).unwrap();
        assert!(fca_nll(&covs, &init.fca).unwrap().is_finite());
        assert!(fastfca_nll(&covs, &init.fastfca).unwrap().is_finite());
        assert!(init_oracle(&[], 1, JdPairing::default()).is_err());
    }

    #[test]
    fn single_active_source_scm_is_outer_product_mean() {
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 1, 2, 30, 4)).unwrap();
        let init = init_oracle(&scene.images, 1, JdPairing::default()).unwrap();
        let mut acc = CMat::zeros(2, 2);
        for j in 0..30 {
            let c = scene.images[0].vector(1, j);
            acc += &c * c.adjoint();
        }
        let expected = acc.unscale(trace_re(&acc) / 2.0);
        assert!(fro(&(&init.fca.bins[1].scms[0] - expected)) < 1e-10);
    }

    #[test]
    fn rank_deficient_estimate_is_floored() {
        // one frame per source gives rank-one SCMs
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 2, 1, 1, 5)).unwrap();
        let init = init_oracle(&scene.images, 1, JdPairing::default()).unwrap();
        assert!(init.floored);
        for r in &init.fca.bins[0].scms {
            assert!(r.clone().cholesky().is_some());
        }
    }

    #[test]
    fn clustering_separates_disjoint_sources() {
        let mut cfg = SceneConfig::new(SceneKind::Instantaneous, 2, 2, 8, 300, 6);
        cfg.smoothness = 0.5;
        let mut scene = synth_scene(&cfg).unwrap();
        // keep only the stronger source at each point so the supports are disjoint
        for i in 0..8 {
            for j in 0..300 {
                let e: Vec<f64> = scene.images.iter().map(|s| s.vector(i, j).norm_squared()).collect();
                let weak = usize::from(e[1] < e[0]);
                let v = scene.images[weak].vector(i, j).scale(1e-2);
                scene.images[weak].set_vector(i, j, &v);
            }
        }
        scene.mixture = Spectrogram::sum(&scene.images).unwrap();
        let labels = cluster_labels(&scene.mixture, 2, 1).unwrap();
        let mut correct = 0;
        let mut total = 0;
        for (i, row) in labels.iter().enumerate() {
            // best of the two labelings per bin
            let truth: Vec<usize> = (0..300)
                .map(|j| {
                    let e: Vec<f64> = scene.images.iter().map(|s| s.vector(i, j).norm_squared()).collect();
                    usize::from(e[1] > e[0])
                })
                .collect();
            let agree = row.iter().zip(&truth).filter(|(l, t)| **l == Some(**t)).count();
            correct += agree.max(300 - agree);
            total += 300;
        }
        let acc = correct as f64 / total as f64;
        assert!(acc >= 0.9, "accuracy {acc}");
        let init = init_spatial_cluster(&scene.mixture, 2, 1, 1).unwrap();
        let covs = sample_covs(&scene.mixture, 1).unwrap();
        assert!(fastfca_nll(&covs, &init.fastfca).unwrap().is_finite());
        assert!(fca_nll(&covs, &init.fca).unwrap().is_finite());
    }

    #[test]
    fn clustering_edge_cases() {
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 2, 3, 20, 7)).unwrap();
        let labels = cluster_labels(&scene.mixture, 1, 0).unwrap();
        assert!(labels.iter().flatten().all(|l| *l == Some(0)));
        let init = init_spatial_cluster(&scene.mixture, 1, 1, 0).unwrap();
        assert_eq!(init.fca.sources(), 1);
        assert!(init_spatial_cluster(&Spectrogram::zeros(2, 3, 20), 2, 1, 0).is_err());
    }

    #[test]
    fn random_init_is_seeded_and_valid() {
        let a = init_random(3, 10, 2, 3, 9).unwrap();
        let b = init_random(3, 10, 2, 3, 9).unwrap();
        assert_eq!(a.fastfca, b.fastfca);
        assert_eq!(a.fca, b.fca);
        a.fca.validate().unwrap();
        a.fastfca.validate().unwrap();
        let c = init_random(3, 10, 2, 3, 10).unwrap();
        let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 3, 3, 10, 1)).unwrap();
        let covs = sample_covs(&scene.mixture, 1).unwrap();
        let na = fastfca_nll(&covs, &a.fastfca).unwrap();
        let nc = fastfca_nll(&covs, &c.fastfca).unwrap();
        assert!(na.is_finite() && nc.is_finite() && na != nc);
        assert!(fca_nll(&covs, &a.fca).unwrap().is_finite());
        assert!(init_random(0, 1, 1, 1, 0).is_err());
    }
}
