//! Fitting at population covariances, flavor agreement, and oracle separation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use jdsep::linalg::fro;
use jdsep::random::{complex_normal, log_uniform, random_fastfca, random_fca, random_unitary};
use jdsep::{
    fastfca_fit, fastmnmf_fit, fca_fit, fca_separate, init_spatial_cluster, match_scores, real_diag, sample_covs,
    si_sdr_spec, synth_scene, CMat, EmPowerUsage, FastMnmfParams, FcaAlgorithm, FcaBin, FcaParams, NmfFactors,
    NmfFlavor, RMat, SampleCovSet, SceneConfig, SceneKind, Spectrogram,
};

/// Block covariances equal to the model's, i.e. the infinite-data limit.
fn population(p: &FcaParams) -> SampleCovSet {
    let bins = p
        .bins
        .iter()
        .map(|b| (0..b.powers.nrows()).map(|j| b.mixture_cov(j)).collect())
        .collect();
    SampleCovSet::from_matrices(bins, 1, p.blocks()).unwrap()
}

fn assert_stationary(trace: &[f64], what: &str) {
    for w in trace.windows(2) {
        assert!((w[1] - w[0]).abs() <= 1e-6 * w[0].abs(), "{what}: {} -> {}", w[0], w[1]);
    }
}

fn same_model(a: &FcaParams, b: &FcaParams, tol: f64) {
    for (x, y) in a.bins.iter().zip(&b.bins) {
        for j in 0..x.powers.nrows() {
            let (cx, cy) = (x.mixture_cov(j), y.mixture_cov(j));
            assert!(fro(&(&cx - &cy)) <= tol * fro(&cy));
        }
    }
}

#[test]
fn fca_truth_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = random_fca(&mut rng, 4, 30, 2, 2);
    let covs = population(&truth);
    for algo in [FcaAlgorithm::Em(EmPowerUsage::Updated), FcaAlgorithm::Mm] {
        let fit = fca_fit(&covs, &truth, algo, 3).unwrap();
        assert_stationary(&fit.nll_trace, "fca");
        same_model(&fit.params, &truth, 1e-6);
    }
}

#[test]
fn fastfca_truth_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = random_fastfca(&mut rng, 4, 40, 3, 2);
    let covs = population(&truth.to_fca().unwrap());
    for flavor in [NmfFlavor::Em, NmfFlavor::Mm] {
        let fit = fastfca_fit(&covs, &truth, flavor, 3).unwrap();
        assert_stationary(&fit.nll_trace, "fastfca");
        same_model(&fit.params.to_fca().unwrap(), &truth.to_fca().unwrap(), 1e-6);
    }
}

#[test]
fn fastmnmf_truth_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = random_fastfca(&mut rng, 6, 25, 2, 2);
    let truth = FastMnmfParams {
        w: base.bins.iter().map(|b| b.w.clone()).collect(),
        loadings: base.bins.iter().map(|b| b.loadings.clone()).collect(),
        nmf: (0..2)
            .map(|_| NmfFactors {
                bases: RMat::from_fn(6, 2, |_, _| log_uniform(&mut rng, 0.1, 10.0)),
                acts: RMat::from_fn(2, 25, |_, _| log_uniform(&mut rng, 0.1, 10.0)),
            })
            .collect(),
    };
    let covs = population(&truth.to_fastfca().to_fca().unwrap());
    let fit = fastmnmf_fit(&covs, &truth, 3).unwrap();
    assert_stationary(&fit.nll_trace, "fastmnmf");
}

#[test]
fn nmf_flavors_land_close() {
    let scene = synth_scene(&SceneConfig::new(SceneKind::JdExact, 2, 2, 32, 200, 4)).unwrap();
    let covs = sample_covs(&scene.mixture, 2).unwrap();
    let init = init_spatial_cluster(&scene.mixture, 2, 2, 0).unwrap();
    let em = fastfca_fit(&covs, &init.fastfca, NmfFlavor::Em, 100).unwrap();
    let mm = fastfca_fit(&covs, &init.fastfca, NmfFlavor::Mm, 100).unwrap();
    for t in [&em.nll_trace, &mm.nll_trace] {
        assert!(t.windows(2).all(|w| w[1] - w[0] <= 1e-8 * w[0].abs()));
    }
    let (a, b) = (em.nll_trace[100], mm.nll_trace[100]);
    assert!((a - b).abs() <= 0.05 * a.abs().min(b.abs()), "EM {a} vs MM {b}");
}

#[test]
fn fca_oracle_filters_separate_disjoint_sources() {
    // R_1 ≈ u1 u1^H and R_2 ≈ u2 u2^H for a random orthonormal pair per bin
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (freqs, frames, eps) = (16, 200, 1e-3);
    let mut bins = Vec::new();
    let mut images = vec![
        Spectrogram::zeros(2, freqs, frames),
        Spectrogram::zeros(2, freqs, frames),
    ];
    for i in 0..freqs {
        let u = random_unitary(&mut rng, 2);
        let diags = [[1.0, eps], [eps, 1.0]];
        let scms: Vec<CMat> = diags.iter().map(|d| &u * real_diag(d) * u.adjoint()).collect();
        let powers = RMat::from_fn(frames, 2, |_, _| log_uniform(&mut rng, 0.1, 10.0));
        for j in 0..frames {
            for (n, d) in diags.iter().enumerate() {
                let z = jdsep::CVec::from_fn(2, |k, _| complex_normal(&mut rng) * (d[k] * powers[(j, n)]).sqrt());
                images[n].set_vector(i, j, &(&u * z));
            }
        }
        bins.push(FcaBin { scms, powers });
    }
    let mixture = Spectrogram::sum(&images).unwrap();
    let est = fca_separate(&mixture, &FcaParams { bins }).unwrap();
    let scores = match_scores(&est, &images, si_sdr_spec).unwrap();
    assert_eq!(scores.perm, vec![0, 1]);
    for s in scores.scores {
        assert!(s >= 20.0, "{s} dB");
    }
}
