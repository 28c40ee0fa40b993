//! Seeded random draws for complex Gaussian data and test matrices.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{hermitize, real_diag, CMat, HermitianPd, RMat};
use crate::model::{FastFcaBin, FastFcaParams, FcaBin, FcaParams};
use crate::stft::Spectrogram;

/// Proper complex Gaussian sample with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Haar-ish unitary from the QR factorization of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMat {
    let g = complex_gaussian_matrix(rng, dim, dim);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = q;
    for (k, mut col) in q.column_iter_mut().enumerate() {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        col *= phase;
    }
    q
}

/// Nonsingular matrix `U diag(s) V` whose singular values span at most
/// `max_condition`.
pub fn random_nonsingular<R: Rng + ?Sized>(rng: &mut R, dim: usize, max_condition: f64) -> CMat {
    let u = random_unitary(rng, dim);
    let v = random_unitary(rng, dim);
    let log_span = max_condition.max(1.0).ln();
    let mut s: Vec<f64> = (0..dim).map(|_| (rng.random::<f64>() * log_span).exp()).collect();
    let geo = (s.iter().map(|x| x.ln()).sum::<f64>() / dim as f64).exp();
    s.iter_mut().for_each(|x| *x /= geo);
    u * real_diag(&s) * v
}

/// Random Hermitian PD matrix `A A^H / M + 0.1 I` with modest conditioning.
pub fn random_hpd<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianPd {
    let a = complex_gaussian_matrix(rng, dim, dim);
    let mut m = (&a * a.adjoint()).scale(1.0 / dim as f64);
    for k in 0..dim {
        m[(k, k)] += Complex64::new(0.1, 0.0);
    }
    HermitianPd::from_trusted(hermitize(&m))
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Spectrogram of i.i.d. `CN(0,1)` entries.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, channels: usize, freqs: usize, frames: usize) -> Spectrogram {
    Spectrogram::from_fn(channels, freqs, frames, |_, _, _| complex_normal(rng))
}

/// Random jointly diagonalizable parameters: `W` with condition at most 10,
/// loadings and activations log-uniform on `[0.1, 10]`.
pub fn random_fastfca<R: Rng + ?Sized>(
    rng: &mut R,
    freqs: usize,
    blocks: usize,
    dim: usize,
    sources: usize,
) -> FastFcaParams {
    let bins = (0..freqs)
        .map(|_| FastFcaBin {
            w: random_nonsingular(rng, dim, 10.0),
            loadings: RMat::from_fn(dim, sources, |_, _| log_uniform(rng, 0.1, 10.0)),
            acts: RMat::from_fn(sources, blocks, |_, _| log_uniform(rng, 0.1, 10.0)),
        })
        .collect();
    FastFcaParams { bins }
}

/// Random full-rank parameters with well-conditioned SCMs.
pub fn random_fca<R: Rng + ?Sized>(rng: &mut R, freqs: usize, blocks: usize, dim: usize, sources: usize) -> FcaParams {
    let bins = (0..freqs)
        .map(|_| FcaBin {
            scms: (0..sources).map(|_| random_hpd(rng, dim).into_inner()).collect(),
            powers: RMat::from_fn(blocks, sources, |_, _| log_uniform(rng, 0.1, 10.0)),
        })
        .collect();
    FcaParams { bins }
}
