//! Decomposed multichannel Wiener filter: decorrelate, per-channel gains,
//! project back.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{ddiag, hermitize, logdet_divergence_raw, real_diag, CMat, CVec, RMat};
use crate::model::{FastFcaBin, FastFcaParams};
use crate::stft::Spectrogram;

/// Wiener gains `L_mn H_nj / Σ_ν L_mν H_νj` for block `j`, as an `M × N` matrix.
pub fn wiener_gains(bin: &FastFcaBin, j: usize) -> RMat {
    let (dim, n_src) = bin.loadings.shape();
    let mut g = RMat::from_fn(dim, n_src, |m, n| bin.loadings[(m, n)] * bin.acts[(n, j)]);
    for m in 0..dim {
        let s: f64 = g.row(m).sum();
        g.row_mut(m).unscale_mut(s);
    }
    g
}

/// Explicit filter `W^-H diag(g_n) W^H` of source `n` at `(i, j)`.
pub fn fastfca_mwf(params: &FastFcaParams, i: usize, j: usize, n: usize) -> Result<CMat> {
    params.validate()?;
    if i >= params.freqs() || j >= params.blocks() || n >= params.sources() {
        return Err(Error::Shape(format!("index ({i}, {j}, {n}) out of range")));
    }
    let bin = &params.bins[i];
    let wh = bin.w.adjoint();
    let wh_inv = wh.clone().try_inverse().ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let g: Vec<f64> = wiener_gains(bin, j).column(n).iter().cloned().collect();
    Ok(wh_inv * real_diag(&g) * wh)
}

/// Separates every frame with the decomposed filter; frame `t` uses the
/// activations of block `t / block_size`.
pub fn fastfca_separate(spec: &Spectrogram, params: &FastFcaParams, block_size: usize) -> Result<Vec<Spectrogram>> {
    params.validate()?;
    if block_size == 0 {
        return Err(Error::InvalidParameter("block size must be at least 1".into()));
    }
    if params.freqs() != spec.freqs()
        || params.dim() != spec.channels()
        || params.blocks() != spec.frames().div_ceil(block_size)
    {
        return Err(Error::Shape("spectrogram and parameters disagree".into()));
    }
    let n_src = params.sources();
    let images = params
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, bin)| {
            let wh = bin.w.adjoint();
            let lu = wh.clone().lu();
            if !lu.is_invertible() {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            (0..spec.frames())
                .map(|t| {
                    let y = &wh * spec.vector(i, t);
                    let g = wiener_gains(bin, t / block_size);
                    (0..n_src)
                        .map(|n| {
                            let z = CVec::from_fn(y.len(), |m, _| y[m] * g[(m, n)]);
                            lu.solve(&z).ok_or(Error::Singular {
                                condition: f64::INFINITY,
                            })
                        })
                        .collect::<Result<Vec<CVec>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Spectrogram::zeros(spec.channels(), spec.freqs(), spec.frames()); n_src];
    for (i, frames) in images.iter().enumerate() {
        for (t, srcs) in frames.iter().enumerate() {
            for (n, c) in srcs.iter().enumerate() {
                out[n].set_vector(i, t, c);
            }
        }
    }
    Ok(out)
}

/// Flury's weighted AJD cost `Σ_j α_j D_LD(W^H X̂_j W | ddiag(W^H X̂_j W))`.
pub fn ajd_cost(w: &CMat, covs: &[CMat], weights: &[f64]) -> Result<f64> {
    if covs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: covs.len(),
            actual: weights.len(),
        });
    }
    let mut acc = 0.0;
    for (x, &a) in covs.iter().zip(weights) {
        let t = hermitize(&(w.adjoint() * x * w));
        acc += a * logdet_divergence_raw(&t, &ddiag(&t))
            .ok_or_else(|| Error::NotPositiveDefinite("transformed covariance is not PD".into()))?;
    }
    Ok(acc)
}
