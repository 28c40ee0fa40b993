//! Full-rank spatial covariance analysis: EM and MM estimators and the
//! multichannel Wiener filter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{floor_pd, geometric_mean_raw, hermitize, inv_hpd, logdet_hpd, trace_re, CMat};
use crate::model::{fca_nll_bin, regularized_inverse, FcaBin, FcaParams, SampleCovSet, POWER_FLOOR};
use crate::stft::Spectrogram;

/// Which power estimate divides `Ψ` in the EM update of `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmPowerUsage {
    /// Use the powers just computed in the same sweep.
    #[default]
    Updated,
    /// Use the powers from before the sweep (ablation).
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcaAlgorithm {
    Em(EmPowerUsage),
    Mm,
}

/// A Wiener filter matrix and whether the mixture covariance had to be loaded.
#[derive(Debug, Clone)]
pub struct MwfFilter {
    pub matrix: CMat,
    pub regularized: bool,
}

/// `F = h_n R_n X^-1` for frequency `i`, block `j`, source `n`.
pub fn mwf_filter(params: &FcaParams, i: usize, j: usize, n: usize) -> Result<MwfFilter> {
    params.validate()?;
    if i >= params.freqs() || j >= params.blocks() || n >= params.sources() {
        return Err(Error::Shape(format!("index ({i}, {j}, {n}) out of range")));
    }
    let bin = &params.bins[i];
    let x = bin.mixture_cov(j);
    let floor = POWER_FLOOR * trace_re(&x).max(f64::MIN_POSITIVE) / x.nrows() as f64;
    let (xinv, regularized) = regularized_inverse(&x, floor);
    Ok(MwfFilter {
        matrix: bin.scms[n].scale(bin.powers[(j, n)]) * xinv,
        regularized,
    })
}

fn power_floor(covs: &SampleCovSet, i: usize) -> f64 {
    POWER_FLOOR * covs.mean_power(i)
}

/// Rescales every `R_n` to trace `M`, moving the factor into `h`.
fn normalize_bin(bin: &mut FcaBin, floor: f64) {
    let m = bin.scms[0].nrows() as f64;
    for (n, r) in bin.scms.iter_mut().enumerate() {
        let s = trace_re(r) / m;
        *r = r.unscale(s);
        for j in 0..bin.powers.nrows() {
            bin.powers[(j, n)] = (bin.powers[(j, n)] * s).max(floor);
        }
    }
}

fn fail(i: usize) -> Error {
    Error::NotPositiveDefinite(format!("mixture covariance in bin {i} lost definiteness"))
}

/// Posterior second moments `Ψ_jn = F X̂ F^H + (I - F) h R` (indexed `[j][n]`).
pub fn posterior_moments(covs: &[CMat], bin: &FcaBin) -> Option<Vec<Vec<CMat>>> {
    let m = bin.scms[0].nrows();
    let eye = CMat::identity(m, m);
    covs.iter()
        .enumerate()
        .map(|(j, xhat)| {
            let xinv = inv_hpd(&bin.mixture_cov(j))?;
            Some(
                bin.scms
                    .iter()
                    .enumerate()
                    .map(|(n, r)| {
                        let hr = r.scale(bin.powers[(j, n)]);
                        let f = &hr * &xinv;
                        hermitize(&(&f * xhat * f.adjoint() + (&eye - &f) * &hr))
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Expected complete-data cost `Σ_jn [ln det(h R) + tr((h R)^-1 Ψ)]` of
/// `bin` under posterior moments `psi`; the EM M-step minimizes it.
pub fn em_q_cost(bin: &FcaBin, psi: &[Vec<CMat>]) -> Option<f64> {
    let m = bin.scms[0].nrows() as f64;
    let mut acc = 0.0;
    for (n, r) in bin.scms.iter().enumerate() {
        let ld = logdet_hpd(r)?;
        let rinv = inv_hpd(r)?;
        for (j, row) in psi.iter().enumerate() {
            let h = bin.powers[(j, n)];
            acc += m * h.ln() + ld + trace_re(&(&rinv * &row[n])) / h;
        }
    }
    Some(acc)
}

/// Auxiliary function `J⁺(Θ, Ξ)` with `Ξ = {Π_j, Γ_jn}`; it upper-bounds
/// the likelihood whenever `Σ_n Γ_jn = I` and `Π_j` is PD.
pub fn mm_majorizer(covs: &[CMat], bin: &FcaBin, pi: &[CMat], gamma: &[Vec<CMat>]) -> Option<f64> {
    let m = bin.scms[0].nrows() as f64;
    let rinv: Vec<CMat> = bin.scms.iter().map(inv_hpd).collect::<Option<_>>()?;
    let mut acc = 0.0;
    for (j, xhat) in covs.iter().enumerate() {
        let piinv = inv_hpd(&pi[j])?;
        acc += logdet_hpd(&pi[j])? - m;
        for (n, r) in bin.scms.iter().enumerate() {
            let h = bin.powers[(j, n)];
            let g = &gamma[j][n];
            acc += h * trace_re(&(r * &piinv));
            acc += trace_re(&(g.adjoint() * &rinv[n] * g * xhat)) / h;
        }
    }
    Some(acc)
}

pub(crate) fn em_step_bin(covs: &[CMat], bin: &FcaBin, usage: EmPowerUsage, floor: f64) -> Option<FcaBin> {
    let m = bin.scms[0].nrows();
    let n_src = bin.scms.len();
    let blocks = covs.len();
    let eye = CMat::identity(m, m);
    let rinv: Vec<CMat> = bin.scms.iter().map(inv_hpd).collect::<Option<_>>()?;
    let mut powers = bin.powers.clone();
    let mut acc = vec![CMat::zeros(m, m); n_src];
    for (j, xhat) in covs.iter().enumerate() {
        let chol = hermitize(&bin.mixture_cov(j)).cholesky()?;
        for n in 0..n_src {
            let h_old = bin.powers[(j, n)];
            let hr = bin.scms[n].scale(h_old);
            // F = hR X^-1, and X^-1 hR = F^H
            let f = chol.solve(&hr).adjoint();
            let psi = hermitize(&(&f * xhat * f.adjoint() + (&eye - &f) * &hr));
            let h_new = (trace_re(&(&rinv[n] * &psi)) / m as f64).max(floor);
            powers[(j, n)] = h_new;
            let div = match usage {
                EmPowerUsage::Updated => h_new,
                EmPowerUsage::Previous => h_old,
            };
            acc[n] += psi.unscale(div);
        }
    }
    let scms = acc
        .into_iter()
        .map(|a| floor_pd(&a.unscale(blocks as f64)).ok().map(|(r, _)| r))
        .collect::<Option<Vec<_>>>()?;
    let mut out = FcaBin { scms, powers };
    normalize_bin(&mut out, floor);
    Some(out)
}

pub(crate) fn mm_step_bin(covs: &[CMat], bin: &FcaBin, floor: f64) -> Option<FcaBin> {
    let m = bin.scms[0].nrows();
    let n_src = bin.scms.len();
    let mut powers = bin.powers.clone();
    for (j, xhat) in covs.iter().enumerate() {
        let xinv = inv_hpd(&bin.mixture_cov(j))?;
        let core = &xinv * xhat * &xinv;
        for (n, r) in bin.scms.iter().enumerate() {
            let num = trace_re(&(&core * r)).max(0.0);
            let den = trace_re(&(&xinv * r));
            if !(den > 0.0) {
                return None;
            }
            powers[(j, n)] = (bin.powers[(j, n)] * (num / den).sqrt()).max(floor);
        }
    }
    // re-tighten the bound at the new powers before the SCM update
    let staged = FcaBin {
        scms: bin.scms.clone(),
        powers,
    };
    let mut a = vec![CMat::zeros(m, m); n_src];
    let mut b = vec![CMat::zeros(m, m); n_src];
    for (j, xhat) in covs.iter().enumerate() {
        let xinv = inv_hpd(&staged.mixture_cov(j))?;
        let core = &xinv * xhat * &xinv;
        for n in 0..n_src {
            let h = staged.powers[(j, n)];
            a[n] += xinv.scale(h);
            b[n] += core.scale(h);
        }
    }
    let mut scms = Vec::with_capacity(n_src);
    for n in 0..n_src {
        let r = &staged.scms[n];
        let ainv = inv_hpd(&a[n])?;
        let rbr = hermitize(&(r * &b[n] * r));
        let (rbr, _) = floor_pd(&rbr).ok()?;
        let next = geometric_mean_raw(&ainv, &rbr);
        scms.push(floor_pd(&next).ok()?.0);
    }
    let mut out = FcaBin {
        scms,
        powers: staged.powers,
    };
    normalize_bin(&mut out, floor);
    Some(out)
}

fn step_all(covs: &SampleCovSet, params: &FcaParams, algo: FcaAlgorithm) -> Result<(FcaParams, f64)> {
    let out = params
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, bin)| {
            let floor = power_floor(covs, i);
            let next = match algo {
                FcaAlgorithm::Em(usage) => em_step_bin(covs.bin(i), bin, usage, floor),
                FcaAlgorithm::Mm => mm_step_bin(covs.bin(i), bin, floor),
            }
            .ok_or_else(|| fail(i))?;
            let nll = fca_nll_bin(covs.bin(i), &next).ok_or_else(|| fail(i))?;
            Ok((next, nll))
        })
        .collect::<Result<Vec<_>>>()?;
    let nll = out.iter().map(|(_, v)| v).sum();
    Ok((
        FcaParams {
            bins: out.into_iter().map(|(b, _)| b).collect(),
        },
        nll,
    ))
}

/// One EM sweep over every frequency.
pub fn fca_em_step(covs: &SampleCovSet, params: &FcaParams, usage: EmPowerUsage) -> Result<FcaParams> {
    params.check_against(covs)?;
    Ok(step_all(covs, params, FcaAlgorithm::Em(usage))?.0)
}

/// One MM sweep over every frequency.
pub fn fca_mm_step(covs: &SampleCovSet, params: &FcaParams) -> Result<FcaParams> {
    params.check_against(covs)?;
    Ok(step_all(covs, params, FcaAlgorithm::Mm)?.0)
}

/// Fitted parameters and the likelihood before and after each iteration.
#[derive(Debug, Clone)]
pub struct FcaFit {
    pub params: FcaParams,
    pub nll_trace: Vec<f64>,
}

pub fn fca_fit(covs: &SampleCovSet, init: &FcaParams, algo: FcaAlgorithm, iters: usize) -> Result<FcaFit> {
    init.check_against(covs)?;
    let mut params = init.clone();
    let mut trace = vec![crate::model::fca_nll(covs, &params)?];
    for _ in 0..iters {
        let (next, nll) = step_all(covs, &params, algo)?;
        params = next;
        trace.push(nll);
    }
    Ok(FcaFit {
        params,
        nll_trace: trace,
    })
}

/// Per-source image estimates `ĉ_n = F_n x`; `params` must have one power
/// row per STFT frame.
pub fn fca_separate(spec: &Spectrogram, params: &FcaParams) -> Result<Vec<Spectrogram>> {
    params.validate()?;
    if params.freqs() != spec.freqs() || params.blocks() != spec.frames() || params.dim() != spec.channels() {
        return Err(Error::Shape("spectrogram and parameters disagree".into()));
    }
    let n_src = params.sources();
    let per_bin: Vec<Vec<Vec<crate::linalg::CVec>>> = params
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, bin)| {
            (0..spec.frames())
                .map(|j| {
                    let x = spec.vector(i, j);
                    let mix = bin.mixture_cov(j);
                    let floor = POWER_FLOOR * trace_re(&mix).max(f64::MIN_POSITIVE) / mix.nrows() as f64;
                    let (xinv, _) = regularized_inverse(&mix, floor);
                    let z = xinv * &x;
                    (0..n_src).map(|n| bin.scms[n].scale(bin.powers[(j, n)]) * &z).collect()
                })
                .collect()
        })
        .collect();
    let mut out = vec![Spectrogram::zeros(spec.channels(), spec.freqs(), spec.frames()); n_src];
    for (i, frames) in per_bin.iter().enumerate() {
        for (j, srcs) in frames.iter().enumerate() {
            for (n, c) in srcs.iter().enumerate() {
                out[n].set_vector(i, j, c);
            }
        }
    }
    Ok(out)
}
