//! Full-band extension: activations factored as `h_ijn = Σ_k t_ikn v_jkn`
//! with one decorrelation matrix per frequency.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastfca::{fastfca_separate, ip_update_w, mm_update_lh};
use crate::linalg::{CMat, RMat};
use crate::model::{decorrelated_powers, fastfca_nll_parts, FastFcaBin, FastFcaParams, SampleCovSet, POWER_FLOOR};
use crate::random::log_uniform;
use crate::stft::Spectrogram;

/// Default number of NMF components per source.
pub const DEFAULT_COMPONENTS: usize = 2;

/// Spectral bases `T` (`I × K`) and temporal activations `V` (`K × J`) of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfFactors {
    pub bases: RMat,
    pub acts: RMat,
}

impl NmfFactors {
    /// `h_n = T V`, frequencies × blocks.
    pub fn powers(&self) -> RMat {
        &self.bases * &self.acts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastMnmfParams {
    pub w: Vec<CMat>,
    /// Per frequency, `M × N`.
    pub loadings: Vec<RMat>,
    /// Per source.
    pub nmf: Vec<NmfFactors>,
}

impl FastMnmfParams {
    pub fn freqs(&self) -> usize {
        self.w.len()
    }

    pub fn sources(&self) -> usize {
        self.nmf.len()
    }

    pub fn components(&self) -> usize {
        self.nmf[0].bases.ncols()
    }

    pub fn blocks(&self) -> usize {
        self.nmf[0].acts.ncols()
    }

    /// Activations of bin `i` as an `N × J` matrix.
    pub fn activations(&self, i: usize) -> RMat {
        let blocks = self.blocks();
        RMat::from_fn(self.sources(), blocks, |n, j| {
            let f = &self.nmf[n];
            (0..f.bases.ncols()).map(|k| f.bases[(i, k)] * f.acts[(k, j)]).sum()
        })
    }

    /// Same model written as per-frequency jointly diagonalizable parameters.
    pub fn to_fastfca(&self) -> FastFcaParams {
        let bins = (0..self.freqs())
            .map(|i| FastFcaBin {
                w: self.w[i].clone(),
                loadings: self.loadings[i].clone(),
                acts: self.activations(i),
            })
            .collect();
        FastFcaParams { bins }
    }

    pub fn check_against(&self, covs: &SampleCovSet) -> Result<()> {
        if self.nmf.is_empty() || self.w.is_empty() {
            return Err(Error::Shape("empty parameter set".into()));
        }
        let (k, j) = (self.components(), self.blocks());
        if self
            .nmf
            .iter()
            .any(|f| f.bases.shape() != (self.freqs(), k) || f.acts.shape() != (k, j))
        {
            return Err(Error::Shape("inconsistent NMF factor shapes".into()));
        }
        if self.loadings.len() != self.freqs() {
            return Err(Error::Shape("one loading matrix per frequency expected".into()));
        }
        if self
            .nmf
            .iter()
            .flat_map(|f| f.bases.iter().chain(f.acts.iter()))
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::Domain("NMF factors must be positive".into()));
        }
        self.to_fastfca().check_against(covs)
    }
}

/// `Σ_i [-J ln|det W_i|² + Σ_mj (U/σ² + ln σ²)]` with `σ²` from the factor model.
pub fn fastmnmf_nll(covs: &SampleCovSet, params: &FastMnmfParams) -> Result<f64> {
    params.check_against(covs)?;
    crate::model::fastfca_nll(covs, &params.to_fastfca())
}

#[derive(Debug, Clone)]
pub struct FastMnmfFit {
    pub params: FastMnmfParams,
    pub nll_trace: Vec<f64>,
}

fn clamp(x: &mut RMat, floor: f64) {
    x.iter_mut().for_each(|v| {
        if !(*v > floor) {
            *v = floor;
        }
    });
}

/// `(U σ^-4, σ^-2)` with `σ² = L_i H_i`, i.e. `(U ⊙ σ^-2, σ^-1)` in variance terms.
fn ratio_terms(u: &RMat, vars: &RMat) -> (RMat, RMat) {
    let inv = vars.map(|v| 1.0 / v);
    (u.component_mul(&inv.component_mul(&inv)), inv)
}

fn update_loadings(u: &[RMat], params: &mut FastMnmfParams, acts: &[RMat]) {
    params.loadings.par_iter_mut().enumerate().for_each(|(i, l)| {
        let (a, b) = ratio_terms(&u[i], &(&*l * &acts[i]));
        let num = &a * acts[i].transpose();
        let den = &b * acts[i].transpose();
        l.zip_zip_apply(&num, &den, |x, p, q| *x *= (p / q).sqrt());
        clamp(l, POWER_FLOOR);
    });
}

/// `L_i^T (U ⊙ σ^-4)` and `L_i^T σ^-2` per frequency, `N × J` each.
fn projected_terms(u: &[RMat], params: &FastMnmfParams, acts: &[RMat]) -> Vec<(RMat, RMat)> {
    (0..params.freqs())
        .into_par_iter()
        .map(|i| {
            let l = &params.loadings[i];
            let (a, b) = ratio_terms(&u[i], &(l * &acts[i]));
            (l.transpose() * a, l.transpose() * b)
        })
        .collect()
}

/// Gathers row `n` of every frequency's projected term into an `I × J` matrix.
fn gather(terms: &[(RMat, RMat)], n: usize, second: bool) -> RMat {
    let blocks = terms[0].0.ncols();
    RMat::from_fn(terms.len(), blocks, |i, j| {
        if second {
            terms[i].1[(n, j)]
        } else {
            terms[i].0[(n, j)]
        }
    })
}

fn all_activations(params: &FastMnmfParams) -> Vec<RMat> {
    (0..params.freqs())
        .into_par_iter()
        .map(|i| params.activations(i))
        .collect()
}

fn update_bases(u: &[RMat], params: &mut FastMnmfParams) {
    let acts = all_activations(params);
    let terms = projected_terms(u, params, &acts);
    for (n, f) in params.nmf.iter_mut().enumerate() {
        let num = gather(&terms, n, false) * f.acts.transpose();
        let den = gather(&terms, n, true) * f.acts.transpose();
        f.bases.zip_zip_apply(&num, &den, |x, p, q| *x *= (p / q).sqrt());
        clamp(&mut f.bases, POWER_FLOOR);
    }
}

fn update_temporal(u: &[RMat], params: &mut FastMnmfParams, floor: f64) {
    let acts = all_activations(params);
    let terms = projected_terms(u, params, &acts);
    for (n, f) in params.nmf.iter_mut().enumerate() {
        let num = f.bases.transpose() * gather(&terms, n, false);
        let den = f.bases.transpose() * gather(&terms, n, true);
        f.acts.zip_zip_apply(&num, &den, |x, p, q| *x *= (p / q).sqrt());
        clamp(&mut f.acts, floor);
    }
}

/// Unit-mean loading columns per frequency (scale into `T` rows), then
/// unit-mean basis columns (scale into `V` rows).
fn normalize(params: &mut FastMnmfParams) {
    for (i, l) in params.loadings.iter_mut().enumerate() {
        for (n, f) in params.nmf.iter_mut().enumerate() {
            let s = l.column(n).mean();
            if s > 0.0 && s.is_finite() {
                l.column_mut(n).unscale_mut(s);
                f.bases.row_mut(i).scale_mut(s);
            }
        }
    }
    for f in &mut params.nmf {
        for k in 0..f.bases.ncols() {
            let s = f.bases.column(k).mean();
            if s > 0.0 && s.is_finite() {
                f.bases.column_mut(k).unscale_mut(s);
                f.acts.row_mut(k).scale_mut(s);
            }
        }
    }
}

fn total_nll(params: &FastMnmfParams, u: &[RMat]) -> Result<f64> {
    let per_bin = (0..params.freqs())
        .into_par_iter()
        .map(|i| {
            let vars = &params.loadings[i] * params.activations(i);
            fastfca_nll_parts(&params.w[i], &u[i], &vars).ok_or(Error::Singular {
                condition: f64::INFINITY,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_bin.iter().sum())
}

/// IP sweeps per frequency, then multiplicative updates of `Λ`, `T` and `V`
/// in that order, each using the refreshed model variances.
pub fn fastmnmf_fit(covs: &SampleCovSet, init: &FastMnmfParams, iters: usize) -> Result<FastMnmfFit> {
    init.check_against(covs)?;
    let mut params = init.clone();
    let mut trace = vec![fastmnmf_nll(covs, &params)?];
    for _ in 0..iters {
        let acts = all_activations(&params);
        let new_w = (0..params.freqs())
            .into_par_iter()
            .map(|i| ip_update_w(covs.bin(i), &params.w[i], &(&params.loadings[i] * &acts[i])))
            .collect::<Result<Vec<_>>>()?;
        params.w = new_w;
        let u: Vec<RMat> = (0..params.freqs())
            .into_par_iter()
            .map(|i| decorrelated_powers(&params.w[i], covs.bin(i)))
            .collect();
        update_loadings(&u, &mut params, &acts);
        update_bases(&u, &mut params);
        let v_floor = POWER_FLOOR * params.nmf.iter().map(|f| f.acts.mean()).sum::<f64>() / params.sources() as f64;
        update_temporal(&u, &mut params, v_floor);
        normalize(&mut params);
        let nll = total_nll(&params, &u)?;
        if !nll.is_finite() {
            return Err(Error::Domain("likelihood became non-finite".into()));
        }
        trace.push(nll);
    }
    Ok(FastMnmfFit {
        params,
        nll_trace: trace,
    })
}

/// IS-NMF of a positive `I × J` matrix into `K` components by MM updates.
pub fn is_nmf(target: &RMat, components: usize, iters: usize, seed: u64) -> NmfFactors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = target.mean().max(f64::MIN_POSITIVE).sqrt();
    let mut t = RMat::from_fn(target.nrows(), components, |_, _| {
        scale * log_uniform(&mut rng, 0.5, 2.0)
    });
    let mut v = RMat::from_fn(components, target.ncols(), |_, _| {
        scale * log_uniform(&mut rng, 0.5, 2.0)
    });
    let floor = POWER_FLOOR * target.mean().max(f64::MIN_POSITIVE);
    for _ in 0..iters {
        mm_update_lh(target, &mut t, &mut v, floor);
    }
    NmfFactors { bases: t, acts: v }
}

/// Warm start from (permutation-aligned) FastFCA parameters: keeps `W` and
/// `Λ`, factors each source's activations into `K` components.
pub fn fastmnmf_init_from_fastfca(
    params: &FastFcaParams,
    components: usize,
    nmf_iters: usize,
    seed: u64,
) -> Result<FastMnmfParams> {
    params.validate()?;
    if components == 0 {
        return Err(Error::InvalidParameter("need at least one NMF component".into()));
    }
    let nmf = (0..params.sources())
        .map(|n| {
            let h = RMat::from_fn(params.freqs(), params.blocks(), |i, j| params.bins[i].acts[(n, j)]);
            is_nmf(&h, components, nmf_iters, seed.wrapping_add(n as u64))
        })
        .collect();
    let mut out = FastMnmfParams {
        w: params.bins.iter().map(|b| b.w.clone()).collect(),
        loadings: params.bins.iter().map(|b| b.loadings.clone()).collect(),
        nmf,
    };
    normalize(&mut out);
    Ok(out)
}

/// Decomposed Wiener filtering with activations from the factor model.
pub fn fastmnmf_separate(spec: &Spectrogram, params: &FastMnmfParams, block_size: usize) -> Result<Vec<Spectrogram>> {
    fastfca_separate(spec, &params.to_fastfca(), block_size)
}
