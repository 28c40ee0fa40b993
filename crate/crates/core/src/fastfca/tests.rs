use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fca::mwf_filter;
use crate::linalg::{exact_jd_pair, fro, real_diag, HermitianPd};
use crate::model::{fca_nll, FastFcaBin};
use crate::random::{complex_normal, log_uniform, random_nonsingular};
use crate::testutil::{random_fastfca, random_hpd, random_spec};

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] - w[0] <= 1e-8 * w[0].abs(), "nll rose {} -> {}", w[0], w[1]);
    }
}

fn setup(
    seed: u64,
    m: usize,
    n: usize,
    i: usize,
    j: usize,
    block: usize,
) -> (Spectrogram, SampleCovSet, FastFcaParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng, m, i, j);
    let covs = sample_covs(&spec, block).unwrap();
    let init = random_fastfca(&mut rng, i, covs.blocks(), m, n);
    (spec, covs, init)
}

#[test]
fn zero_iterations_return_init() {
    let (_, covs, init) = setup(1, 2, 2, 3, 10, 1);
    let fit = fastfca_fit(&covs, &init, NmfFlavor::Mm, 0).unwrap();
    assert_eq!(fit.params, init);
    assert_eq!(fit.nll_trace.len(), 1);
}

#[test]
fn both_flavors_monotone() {
    for seed in 0..2 {
        for m in [2, 3] {
            for n in [2, 3, 4] {
                let (_, covs, init) = setup(10 + seed, m, n, 3, 40, 1);
                for flavor in [NmfFlavor::Em, NmfFlavor::Mm] {
                    let fit = fastfca_fit(&covs, &init, flavor, 40).unwrap();
                    assert_monotone(&fit.nll_trace);
                }
            }
        }
    }
}

#[test]
fn traces_match_full_rank_likelihood() {
    let (_, covs, init) = setup(21, 3, 2, 2, 24, 3);
    let mut params = init;
    for _ in 0..5 {
        let fit = fastfca_fit(&covs, &params, NmfFlavor::Mm, 1).unwrap();
        params = fit.params;
        let full = fca_nll(&covs, &params.to_fca().unwrap()).unwrap();
        let last = *fit.nll_trace.last().unwrap();
        assert!((full - last).abs() < 1e-8 * last.abs());
    }
}

#[test]
fn decomposition_identity_at_every_iterate() {
    let (_, covs, init) = setup(22, 3, 3, 2, 30, 3);
    let constant = covs.data_constant().unwrap();
    let mut params = init;
    for _ in 0..5 {
        params = fastfca_fit(&covs, &params, NmfFlavor::Em, 1).unwrap().params;
        let nll = fastfca_nll(&covs, &params).unwrap();
        let mut parts = constant;
        for (i, b) in params.bins.iter().enumerate() {
            parts += ajd_cost(&b.w, covs.bin(i), &vec![1.0; covs.blocks()]).unwrap();
            parts += is_cost(&decorrelated_powers(&b.w, covs.bin(i)), &b.loadings, &b.acts);
        }
        assert!((nll - parts).abs() <= 1e-8 * nll.abs());
    }
}

#[test]
fn single_source_filter_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let p = random_fastfca(&mut rng, 1, 4, 3, 1);
    let f = fastfca_mwf(&p, 0, 2, 0).unwrap();
    assert!(fro(&(f - CMat::identity(3, 3))) < 1e-12);
}

#[test]
fn identity_w_gives_scalar_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut p = random_fastfca(&mut rng, 1, 3, 3, 2);
    p.bins[0].w = CMat::identity(3, 3);
    let f = fastfca_mwf(&p, 0, 1, 0).unwrap();
    let b = &p.bins[0];
    let g: Vec<f64> = (0..3)
        .map(|m| {
            let a = b.loadings[(m, 0)] * b.acts[(0, 1)];
            a / (a + b.loadings[(m, 1)] * b.acts[(1, 1)])
        })
        .collect();
    assert!(fro(&(f - real_diag(&g))) < 1e-14);
}

#[test]
fn decomposed_filter_matches_direct() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for m in [2, 3, 4] {
        for _ in 0..10 {
            let p = random_fastfca(&mut rng, 1, 2, m, 3);
            let full = p.to_fca().unwrap();
            for n in 0..3 {
                let a = fastfca_mwf(&p, 0, 1, n).unwrap();
                let b = mwf_filter(&full, 0, 1, n).unwrap().matrix;
                assert!(fro(&(&a - &b)) <= 1e-10 * fro(&b));
            }
        }
    }
}

#[test]
fn gains_partition_and_separation_sums() {
    let (spec, _, _) = setup(33, 3, 2, 4, 12, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let p = random_fastfca(&mut rng, 4, 3, 3, 4);
    for b in &p.bins {
        for j in 0..3 {
            let g = wiener_gains(b, j);
            assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
            assert!(g.row_iter().all(|r| (r.sum() - 1.0).abs() < 1e-12));
        }
    }
    let outs = fastfca_separate(&spec, &p, 4).unwrap();
    let sum = Spectrogram::sum(&outs).unwrap();
    let err = sum
        .values()
        .iter()
        .zip(spec.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-9);
    // separation equals applying the explicit filters
    let f = fastfca_mwf(&p, 2, 1, 3).unwrap();
    let c = &f * spec.vector(2, 5);
    for m in 0..3 {
        assert!((c[m] - outs[3].get(m, 2, 5)).norm() < 1e-10);
    }
    assert!(fastfca_separate(&spec, &p, 3).is_err());
}

#[test]
fn ajd_cost_examples() {
    let covs: Vec<CMat> = (0..4).map(|j| real_diag(&[1.0 + j as f64, 2.0])).collect();
    assert!(ajd_cost(&CMat::identity(2, 2), &covs, &[1.0; 4]).unwrap().abs() < 1e-14);

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let r1 = random_hpd(&mut rng, 3);
    let r2 = random_hpd(&mut rng, 3);
    let jd = exact_jd_pair(&r1, &r2).unwrap();
    let covs: Vec<CMat> = (0..6)
        .map(|_| {
            r1.as_mat().scale(log_uniform(&mut rng, 0.1, 10.0)) + r2.as_mat().scale(log_uniform(&mut rng, 0.1, 10.0))
        })
        .collect();
    assert!(ajd_cost(&jd.w, &covs, &[1.0; 6]).unwrap() <= 1e-9);
    assert!(ajd_cost(&jd.w, &covs, &[1.0; 5]).is_err());
}

#[test]
fn piecewise_blocks() {
    let (spec, covs, _) = setup(41, 3, 2, 2, 12, 1);
    let same = piecewise_prepare(&spec, 1).unwrap();
    for i in 0..2 {
        for j in 0..12 {
            assert_eq!(same.get(i, j), covs.get(i, j));
        }
    }
    let whole = piecewise_prepare(&spec, 12).unwrap();
    assert_eq!(whole.blocks(), 1);
    let mean = (0..12).fold(CMat::zeros(3, 3), |a, j| a + covs.get(1, j)).unscale(12.0);
    assert!(fro(&(whole.get(1, 0) - mean)) < 1e-12);
    let blocks = piecewise_prepare(&spec, 3).unwrap();
    for i in 0..2 {
        assert!(ajd_cost(&CMat::identity(3, 3), blocks.bin(i), &[1.0; 4])
            .unwrap()
            .is_finite());
        for x in blocks.bin(i) {
            assert!(x.clone().cholesky().is_some());
        }
    }
}

/// Two independent streams with block-wise varying power mixed by `a`.
fn instantaneous(seed: u64, a: &CMat, freqs: usize, frames: usize) -> Spectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = a.nrows();
    let mut spec = Spectrogram::zeros(dim, freqs, frames);
    for i in 0..freqs {
        let mut power = vec![1.0; dim];
        for j in 0..frames {
            if j % 8 == 0 {
                power.iter_mut().for_each(|p| *p = log_uniform(&mut rng, 0.01, 100.0));
            }
            let s = crate::linalg::CVec::from_fn(dim, |m, _| complex_normal(&mut rng) * power[m].sqrt());
            spec.set_vector(i, j, &(a * s));
        }
    }
    spec
}

#[test]
fn ica_mode_unmixes_instantaneous_mixture() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let a = random_nonsingular(&mut rng, 2, 5.0);
    let spec = instantaneous(51, &a, 2, 400);
    let covs = sample_covs(&spec, 8).unwrap();
    let fit = ica_mode_fit(&covs, &vec![CMat::identity(2, 2); 2], 50).unwrap();
    assert_monotone(&fit.nll_trace);
    for b in &fit.params.bins {
        let g = b.w.adjoint() * &a;
        // each row should have a single dominant entry
        for r in 0..2 {
            let e: Vec<f64> = (0..2).map(|c| g[(r, c)].norm_sqr()).collect();
            let leak = e.iter().cloned().fold(f64::INFINITY, f64::min) / e.iter().sum::<f64>();
            assert!(leak <= 0.05, "leakage {leak}");
        }
    }
}

#[test]
fn ica_mode_keeps_unmixed_data_diagonal() {
    let spec = instantaneous(52, &CMat::identity(2, 2), 1, 200);
    let covs = sample_covs(&spec, 4).unwrap();
    let fit = ica_mode_fit(&covs, &[CMat::identity(2, 2)], 20).unwrap();
    let w = &fit.params.bins[0].w;
    let off = w[(0, 1)].norm() + w[(1, 0)].norm();
    let on = w[(0, 0)].norm() + w[(1, 1)].norm();
    assert!(off < 0.1 * on, "{w}");
}

#[test]
fn ica_mode_rejects_bad_shapes() {
    let (_, covs, _) = setup(53, 2, 2, 1, 12, 4);
    assert!(ica_mode_fit(&covs, &[CMat::identity(3, 3)], 1).is_err());
    let rank_one = sample_covs(&random_spec(&mut ChaCha8Rng::seed_from_u64(1), 2, 1, 12), 1).unwrap();
    assert!(ica_mode_fit(&rank_one, &[CMat::identity(2, 2)], 1).is_err());
}

#[test]
fn diagonal_rescaling_leaves_nll_unchanged() {
    let (_, covs, p) = setup(60, 3, 2, 2, 10, 1);
    let base = fastfca_nll(&covs, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut q = p.clone();
    for b in &mut q.bins {
        let d: Vec<Complex64> = (0..3)
            .map(|_| complex_normal(&mut rng) + Complex64::new(1.0, 0.0))
            .collect();
        for m in 0..3 {
            let col = b.w.column(m) * d[m];
            b.w.set_column(m, &col);
            let row = b.loadings.row(m) * d[m].norm_sqr();
            b.loadings.set_row(m, &row);
        }
    }
    assert!((fastfca_nll(&covs, &q).unwrap() - base).abs() <= 1e-10 * base.abs());
}

#[test]
fn exact_jd_init_reproduces_loadings() {
    // R_n = W^-H Λ_n W^-1 with N = 2: exact_jd_pair recovers Λ up to order and scale
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let w = random_nonsingular(&mut rng, 3, 10.0);
    let bin = FastFcaBin {
        w: w.clone(),
        loadings: RMat::from_fn(3, 2, |_, _| log_uniform(&mut rng, 0.1, 10.0)),
        acts: RMat::from_element(2, 1, 1.0),
    };
    let r = bin.scms().unwrap();
    let jd = exact_jd_pair(
        &HermitianPd::new(r[0].clone()).unwrap(),
        &HermitianPd::new(r[1].clone()).unwrap(),
    )
    .unwrap();
    let truth: Vec<f64> = (0..3).map(|m| bin.loadings[(m, 1)] / bin.loadings[(m, 0)]).collect();
    let mut ratios: Vec<f64> = jd.d2.values().iter().zip(jd.d1.values()).map(|(a, b)| a / b).collect();
    let mut truth_sorted = truth.clone();
    ratios.sort_by(f64::total_cmp);
    truth_sorted.sort_by(f64::total_cmp);
    for (a, b) in ratios.iter().zip(&truth_sorted) {
        assert!((a - b).abs() < 1e-8 * b);
    }
}
