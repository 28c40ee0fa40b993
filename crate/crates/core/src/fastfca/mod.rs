//! Jointly diagonalizable FCA: iterative projection for `W` interleaved with
//! IS-NMF updates of the loadings and activations.

mod align;
mod filter;
mod ip;
mod nmf;

pub use align::align_permutations;
pub use filter::{ajd_cost, fastfca_mwf, fastfca_separate, wiener_gains};
pub use ip::{ip_update_w, weighted_cov};
pub use nmf::{balance_lh, em_gains, em_update_lh, is_cost, mm_update_lh};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};
use crate::model::{
    decorrelated_powers, fastfca_nll, fastfca_nll_parts, sample_covs, FastFcaBin, FastFcaParams, SampleCovSet,
    POWER_FLOOR,
};
use crate::stft::Spectrogram;

/// Default iteration count for all estimators.
pub const DEFAULT_ITERS: usize = 20;

/// Which IS-NMF update follows each IP sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmfFlavor {
    Em,
    #[default]
    Mm,
}

#[derive(Debug, Clone, Copy)]
enum LhUpdate {
    Nmf(NmfFlavor),
    /// Loadings frozen at one-hot columns; activations set to their argmin.
    Ica,
}

/// Fitted parameters and the likelihood before and after each iteration.
#[derive(Debug, Clone)]
pub struct FastFcaFit {
    pub params: FastFcaParams,
    pub nll_trace: Vec<f64>,
}

fn iterate_bin(covs: &[CMat], bin: &mut FastFcaBin, update: LhUpdate) -> Result<f64> {
    bin.w = ip_update_w(covs, &bin.w, &bin.mix_vars())?;
    let u = decorrelated_powers(&bin.w, covs);
    let floor = POWER_FLOOR * u.mean().max(f64::MIN_POSITIVE);
    match update {
        LhUpdate::Nmf(NmfFlavor::Em) => em_update_lh(&u, &mut bin.loadings, &mut bin.acts, floor),
        LhUpdate::Nmf(NmfFlavor::Mm) => mm_update_lh(&u, &mut bin.loadings, &mut bin.acts, floor),
        LhUpdate::Ica => bin.acts = u.map(|v| v.max(floor)),
    }
    if let LhUpdate::Nmf(_) = update {
        balance_lh(&mut bin.loadings, &mut bin.acts);
    }
    fastfca_nll_parts(&bin.w, &u, &bin.mix_vars()).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })
}

fn run(covs: &SampleCovSet, init: &FastFcaParams, update: LhUpdate, iters: usize) -> Result<FastFcaFit> {
    let mut params = init.clone();
    let mut trace = vec![fastfca_nll(covs, &params)?];
    for _ in 0..iters {
        let per_bin = params
            .bins
            .par_iter_mut()
            .enumerate()
            .map(|(i, bin)| iterate_bin(covs.bin(i), bin, update))
            .collect::<Result<Vec<f64>>>()?;
        let nll: f64 = per_bin.iter().sum();
        if !nll.is_finite() {
            return Err(Error::Domain("likelihood became non-finite".into()));
        }
        trace.push(nll);
    }
    Ok(FastFcaFit {
        params,
        nll_trace: trace,
    })
}

/// Runs `iters` iterations of IP followed by the chosen IS-NMF update.
pub fn fastfca_fit(covs: &SampleCovSet, init: &FastFcaParams, flavor: NmfFlavor, iters: usize) -> Result<FastFcaFit> {
    init.check_against(covs)?;
    run(covs, init, LhUpdate::Nmf(flavor), iters)
}

/// Time-varying Gaussian ICA: `N = M` with `Λ_n = e_n e_n^T` held fixed, so
/// only `W` and the activations move. The activations start at their argmin
/// given `init_w`. Blocks must hold at least `M` frames; with rank-one
/// observations this cost has no lower bound.
pub fn ica_mode_fit(covs: &SampleCovSet, init_w: &[CMat], iters: usize) -> Result<FastFcaFit> {
    let dim = covs.dim();
    if init_w.len() != covs.freqs() {
        return Err(Error::DimensionMismatch {
            expected: covs.freqs(),
            actual: init_w.len(),
        });
    }
    if init_w.iter().any(|w| w.nrows() != dim || w.ncols() != dim) {
        return Err(Error::Shape("ICA mode needs N = M square demixing matrices".into()));
    }
    if covs.block_size() < dim {
        return Err(Error::InvalidParameter(format!(
            "ICA mode needs blocks of at least {dim} frames, got {}",
            covs.block_size()
        )));
    }
    let bins = init_w
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let u = decorrelated_powers(w, covs.bin(i));
            let floor = POWER_FLOOR * u.mean().max(f64::MIN_POSITIVE);
            FastFcaBin {
                w: w.clone(),
                loadings: RMat::identity(dim, dim),
                acts: u.map(|v| v.max(floor)),
            }
        })
        .collect();
    let init = FastFcaParams { bins };
    init.check_against(covs)?;
    run(covs, &init, LhUpdate::Ica, iters)
}

/// Block covariances for the piecewise-stationary model.
pub fn piecewise_prepare(spec: &Spectrogram, block_size: usize) -> Result<SampleCovSet> {
    sample_covs(spec, block_size)
}

#[cfg(test)]
mod tests;
