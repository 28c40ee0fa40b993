//! Observation statistics, parameter containers and the negative
//! log-likelihoods shared by the full-rank and jointly diagonalizable models.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, inv_hpd, log_abs_det_sq, logdet_hpd, quad_form, real_diag, trace_re, CMat, CVec, RMat};
use crate::stft::Spectrogram;

/// Relative positivity floor for powers and variances.
pub const POWER_FLOOR: f64 = 1e-12;

/// Per-frequency observation covariances, either rank-1 outer products
/// (`block_size == 1`) or averages over blocks of consecutive frames.
#[derive(Debug, Clone)]
pub struct SampleCovSet {
    dim: usize,
    block_size: usize,
    frames: usize,
    bins: Vec<Vec<CMat>>,
    mean_power: Vec<f64>,
}

impl SampleCovSet {
    /// Assembles a set from explicit matrices `bins[i][j]`.
    pub fn from_matrices(bins: Vec<Vec<CMat>>, block_size: usize, frames: usize) -> Result<Self> {
        let first = bins
            .first()
            .and_then(|b| b.first())
            .ok_or_else(|| Error::InvalidParameter("empty covariance set".into()))?;
        let dim = first.nrows();
        let blocks = bins[0].len();
        for b in &bins {
            if b.len() != blocks || b.iter().any(|x| x.nrows() != dim || x.ncols() != dim) {
                return Err(Error::Shape("ragged covariance set".into()));
            }
        }
        if block_size == 0 || frames.div_ceil(block_size) != blocks {
            return Err(Error::Shape(format!(
                "{frames} frames in blocks of {block_size} do not give {blocks} blocks"
            )));
        }
        let mean_power = bins
            .iter()
            .map(|b| b.iter().map(trace_re).sum::<f64>() / (blocks * dim) as f64)
            .collect::<Vec<_>>();
        let global = mean_power.iter().sum::<f64>() / mean_power.len() as f64;
        let fallback = if global > 0.0 { global } else { 1.0 };
        let mean_power = mean_power
            .into_iter()
            .map(|p| if p > 0.0 { p } else { fallback })
            .collect();
        Ok(Self {
            dim,
            block_size,
            frames,
            bins,
            mean_power,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn freqs(&self) -> usize {
        self.bins.len()
    }

    /// Number of blocks (equal to the frame count when `block_size == 1`).
    pub fn blocks(&self) -> usize {
        self.bins[0].len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bin(&self, i: usize) -> &[CMat] {
        &self.bins[i]
    }

    pub fn get(&self, i: usize, j: usize) -> &CMat {
        &self.bins[i][j]
    }

    /// Block index holding STFT frame `frame`.
    pub fn block_of(&self, frame: usize) -> usize {
        frame / self.block_size
    }

    /// Mean per-channel power in bin `i`, used to scale positivity floors.
    pub fn mean_power(&self, i: usize) -> f64 {
        self.mean_power[i]
    }

    pub fn total_mean_power(&self) -> f64 {
        self.mean_power.iter().sum::<f64>() / self.freqs() as f64
    }

    /// `Σ_ij [ln det X̂_ij + M]`, the data-only term separating the
    /// likelihood from its divergence decomposition. Needs PD blocks.
    pub fn data_constant(&self) -> Result<f64> {
        let mut acc = 0.0;
        for bin in &self.bins {
            for x in bin {
                acc += logdet_hpd(x).ok_or_else(|| {
                    Error::NotPositiveDefinite("block covariance is singular; use blocks of at least M frames".into())
                })? + self.dim as f64;
            }
        }
        Ok(acc)
    }
}

/// Rank-1 (`block_size == 1`) or block-averaged observation covariances.
pub fn sample_covs(spec: &Spectrogram, block_size: usize) -> Result<SampleCovSet> {
    if spec.channels() == 0 || spec.freqs() == 0 || spec.frames() == 0 {
        return Err(Error::InvalidParameter("empty spectrogram".into()));
    }
    if block_size == 0 {
        return Err(Error::InvalidParameter("block size must be at least 1".into()));
    }
    let m = spec.channels();
    let frames = spec.frames();
    let blocks = frames.div_ceil(block_size);
    let bins = (0..spec.freqs())
        .into_par_iter()
        .map(|i| {
            (0..blocks)
                .map(|j| {
                    let lo = j * block_size;
                    let hi = (lo + block_size).min(frames);
                    let mut acc = CMat::zeros(m, m);
                    for t in lo..hi {
                        let x = spec.vector(i, t);
                        acc += &x * x.adjoint();
                    }
                    hermitize(&acc.unscale((hi - lo) as f64))
                })
                .collect()
        })
        .collect();
    SampleCovSet::from_matrices(bins, block_size, frames)
}

/// Full-rank model parameters of one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FcaBin {
    /// Spatial covariance `R_n` per source.
    pub scms: Vec<CMat>,
    /// Power spectra `h_jn`, blocks × sources.
    pub powers: RMat,
}

impl FcaBin {
    /// `X_j = Σ_n h_jn R_n`.
    pub fn mixture_cov(&self, j: usize) -> CMat {
        let m = self.scms[0].nrows();
        let mut x = CMat::zeros(m, m);
        for (n, r) in self.scms.iter().enumerate() {
            x += r.scale(self.powers[(j, n)]);
        }
        x
    }

    pub fn permute(&mut self, perm: &[usize]) {
        self.scms = perm.iter().map(|&p| self.scms[p].clone()).collect();
        let old = self.powers.clone();
        for (n, &p) in perm.iter().enumerate() {
            self.powers.set_column(n, &old.column(p));
        }
    }
}

/// Full-rank spatial covariance model `X_ij = Σ_n h_ijn R_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcaParams {
    pub bins: Vec<FcaBin>,
}

impl FcaParams {
    pub fn freqs(&self) -> usize {
        self.bins.len()
    }

    pub fn sources(&self) -> usize {
        self.bins[0].scms.len()
    }

    pub fn blocks(&self) -> usize {
        self.bins[0].powers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.bins[0].scms[0].nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() || self.bins[0].scms.is_empty() {
            return Err(Error::Shape("empty parameter set".into()));
        }
        let (n, j, m) = (self.sources(), self.blocks(), self.dim());
        for b in &self.bins {
            if b.scms.len() != n || b.powers.nrows() != j || b.powers.ncols() != n {
                return Err(Error::Shape("inconsistent FCA parameter shapes".into()));
            }
            if b.scms.iter().any(|r| r.nrows() != m || r.ncols() != m) {
                return Err(Error::Shape("inconsistent SCM sizes".into()));
            }
            if b.powers.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
                return Err(Error::Domain("power spectra must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn check_against(&self, covs: &SampleCovSet) -> Result<()> {
        self.validate()?;
        if self.freqs() != covs.freqs() || self.blocks() != covs.blocks() || self.dim() != covs.dim() {
            return Err(Error::Shape(format!(
                "parameters are {}x{}x{} (I,J,M), data is {}x{}x{}",
                self.freqs(),
                self.blocks(),
                self.dim(),
                covs.freqs(),
                covs.blocks(),
                covs.dim()
            )));
        }
        Ok(())
    }

    /// Spreads block powers over frames: `h` of frame `t` is that of its block.
    pub fn expand_blocks(&self, block_size: usize, frames: usize) -> FcaParams {
        let bins = self
            .bins
            .iter()
            .map(|b| FcaBin {
                scms: b.scms.clone(),
                powers: RMat::from_fn(frames, b.powers.ncols(), |t, n| b.powers[(t / block_size, n)]),
            })
            .collect();
        FcaParams { bins }
    }

    /// Averages frame powers over blocks of `block_size` frames.
    pub fn pool_blocks(&self, block_size: usize) -> FcaParams {
        let bins = self
            .bins
            .iter()
            .map(|b| FcaBin {
                scms: b.scms.clone(),
                powers: pool_rows(&b.powers, block_size),
            })
            .collect();
        FcaParams { bins }
    }
}

fn pool_rows(p: &RMat, block_size: usize) -> RMat {
    let frames = p.nrows();
    let blocks = frames.div_ceil(block_size);
    RMat::from_fn(blocks, p.ncols(), |j, n| {
        let lo = j * block_size;
        let hi = (lo + block_size).min(frames);
        (lo..hi).map(|t| p[(t, n)]).sum::<f64>() / (hi - lo) as f64
    })
}

/// Jointly diagonalizable model parameters of one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FastFcaBin {
    /// Decorrelation matrix `W` (columns `w_m`); `y_j = W^H x_j`.
    pub w: CMat,
    /// `L[m, n] = [Λ_n]_mm`, channels × sources.
    pub loadings: RMat,
    /// `H[n, j] = h_jn`, sources × blocks.
    pub acts: RMat,
}

impl FastFcaBin {
    /// `σ²_mj = [L H]_mj`.
    pub fn mix_vars(&self) -> RMat {
        &self.loadings * &self.acts
    }

    /// `R_n = W^-H Λ_n W^-1` for every source.
    pub fn scms(&self) -> Result<Vec<CMat>> {
        let winv = self.w.clone().try_inverse().ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        let winv_h = winv.adjoint();
        Ok((0..self.loadings.ncols())
            .map(|n| {
                let lam: Vec<f64> = self.loadings.column(n).iter().cloned().collect();
                hermitize(&(&winv_h * real_diag(&lam) * &winv))
            })
            .collect())
    }

    pub fn permute(&mut self, perm: &[usize]) {
        let l = self.loadings.clone();
        let h = self.acts.clone();
        for (n, &p) in perm.iter().enumerate() {
            self.loadings.set_column(n, &l.column(p));
            self.acts.set_row(n, &h.row(p));
        }
    }
}

/// Jointly diagonalizable model: `R_in = W_i^-H Λ_in W_i^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastFcaParams {
    pub bins: Vec<FastFcaBin>,
}

impl FastFcaParams {
    pub fn freqs(&self) -> usize {
        self.bins.len()
    }

    pub fn sources(&self) -> usize {
        self.bins[0].loadings.ncols()
    }

    pub fn blocks(&self) -> usize {
        self.bins[0].acts.ncols()
    }

    pub fn dim(&self) -> usize {
        self.bins[0].w.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() {
            return Err(Error::Shape("empty parameter set".into()));
        }
        let (n, j, m) = (self.sources(), self.blocks(), self.dim());
        for b in &self.bins {
            if b.w.nrows() != m || b.w.ncols() != m {
                return Err(Error::Shape("decorrelation matrix has wrong size".into()));
            }
            if b.loadings.shape() != (m, n) || b.acts.shape() != (n, j) {
                return Err(Error::Shape("inconsistent loading/activation shapes".into()));
            }
            if b.w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Domain("non-finite decorrelation matrix".into()));
            }
            if b.acts.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Domain("activations must be positive".into()));
            }
            // zero loadings are allowed (one-hot ICA pattern) as long as every channel has variance
            if b.loadings.iter().any(|&v| !(v >= 0.0) || !v.is_finite())
                || b.loadings.row_iter().any(|r| r.iter().all(|&v| v == 0.0))
            {
                return Err(Error::Domain(
                    "loadings must be nonnegative with a positive entry per channel".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn check_against(&self, covs: &SampleCovSet) -> Result<()> {
        self.validate()?;
        if self.freqs() != covs.freqs() || self.blocks() != covs.blocks() || self.dim() != covs.dim() {
            return Err(Error::Shape(format!(
                "parameters are {}x{}x{} (I,J,M), data is {}x{}x{}",
                self.freqs(),
                self.blocks(),
                self.dim(),
                covs.freqs(),
                covs.blocks(),
                covs.dim()
            )));
        }
        Ok(())
    }

    /// Equivalent full-rank parameters under the joint-diagonalization map.
    pub fn to_fca(&self) -> Result<FcaParams> {
        let bins = self
            .bins
            .iter()
            .map(|b| {
                Ok(FcaBin {
                    scms: b.scms()?,
                    powers: b.acts.transpose(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FcaParams { bins })
    }

    pub fn pool_blocks(&self, block_size: usize) -> FastFcaParams {
        let bins = self
            .bins
            .iter()
            .map(|b| FastFcaBin {
                w: b.w.clone(),
                loadings: b.loadings.clone(),
                acts: pool_rows(&b.acts.transpose(), block_size).transpose(),
            })
            .collect();
        FastFcaParams { bins }
    }
}

/// `U[m, j] = w_m^H X̂_j w_m` for one bin.
pub fn decorrelated_powers(w: &CMat, covs: &[CMat]) -> RMat {
    let m = w.nrows();
    let cols: Vec<CVec> = (0..m).map(|k| w.column(k).into_owned()).collect();
    RMat::from_fn(m, covs.len(), |k, j| quad_form(&covs[j], &cols[k]).max(0.0))
}

/// Decorrelated observation powers `U` and model variances `σ²` per bin.
#[derive(Debug, Clone)]
pub struct DecorrelatedStats {
    pub powers: Vec<RMat>,
    pub mix_vars: Vec<RMat>,
}

pub fn decorrelated_stats(covs: &SampleCovSet, params: &FastFcaParams) -> Result<DecorrelatedStats> {
    params.check_against(covs)?;
    let (powers, mix_vars) = params
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, b)| (decorrelated_powers(&b.w, covs.bin(i)), b.mix_vars()))
        .unzip();
    Ok(DecorrelatedStats { powers, mix_vars })
}

pub(crate) fn fca_nll_bin(covs: &[CMat], bin: &FcaBin) -> Option<f64> {
    let mut acc = 0.0;
    for (j, xhat) in covs.iter().enumerate() {
        let x = hermitize(&bin.mixture_cov(j));
        let chol = x.cholesky()?;
        let l = chol.l_dirty();
        let logdet: f64 = (0..l.nrows()).map(|k| 2.0 * l[(k, k)].re.ln()).sum();
        acc += logdet + trace_re(&chol.solve(xhat));
    }
    Some(acc)
}

/// `Σ_ij [ln det X_ij(Θ) + tr(X_ij(Θ)^-1 X̂_ij)]`.
pub fn fca_nll(covs: &SampleCovSet, params: &FcaParams) -> Result<f64> {
    params.check_against(covs)?;
    let per_bin = params
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            fca_nll_bin(covs.bin(i), b)
                .ok_or_else(|| Error::NotPositiveDefinite(format!("mixture covariance in bin {i}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_bin.iter().sum())
}

/// Likelihood of one bin given precomputed `U` and `σ²`.
pub(crate) fn fastfca_nll_parts(w: &CMat, powers: &RMat, vars: &RMat) -> Option<f64> {
    let logdet = log_abs_det_sq(w)?;
    let blocks = powers.ncols() as f64;
    let fit: f64 = powers.iter().zip(vars.iter()).map(|(&u, &s)| u / s + s.ln()).sum();
    Some(-blocks * logdet + fit)
}

pub(crate) fn fastfca_nll_bin(covs: &[CMat], bin: &FastFcaBin) -> Option<f64> {
    let u = decorrelated_powers(&bin.w, covs);
    fastfca_nll_parts(&bin.w, &u, &bin.mix_vars())
}

/// `Σ_i [-J ln|det W_i|² + Σ_mj (U_imj / σ²_imj + ln σ²_imj)]`.
pub fn fastfca_nll(covs: &SampleCovSet, params: &FastFcaParams) -> Result<f64> {
    params.check_against(covs)?;
    let per_bin = params
        .bins
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            fastfca_nll_bin(covs.bin(i), b).ok_or(Error::Singular {
                condition: f64::INFINITY,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_bin.iter().sum())
}

/// Inverse of a mixture covariance, for filters.
pub(crate) fn regularized_inverse(x: &CMat, floor: f64) -> (CMat, bool) {
    if let Some(inv) = inv_hpd(x) {
        if inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return (inv, false);
        }
    }
    let m = x.nrows();
    let mut loaded = hermitize(x);
    for k in 0..m {
        loaded[(k, k)] += Complex64::new(floor.max(f64::MIN_POSITIVE), 0.0);
    }
    let inv = inv_hpd(&loaded).unwrap_or_else(|| DMatrix::identity(m, m).unscale(floor.max(f64::MIN_POSITIVE)));
    (inv, true)
}
