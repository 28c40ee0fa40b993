//! Hermitian positive-definite kernels shared by every estimator.
//!
//! Matrices here are tiny (a handful of microphones), dense and complex.
//! Every matrix function goes through a single Hermitian eigendecomposition
//! after symmetrization, so the roundoff that accumulates across many
//! update sweeps never leaks an anti-Hermitian part into the results.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// Relative eigenvalue floor applied when a matrix is admitted as PD.
pub const PD_FLOOR: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-12;

/// Hermitian positive-definite matrix.
///
/// Construction symmetrizes the input and clips eigenvalues below
/// `PD_FLOOR * trace / M`; `was_floored` records whether clipping happened.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPd {
    mat: CMat,
    floored: bool,
}

impl HermitianPd {
    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Shape(format!(
                "expected square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let scale = mat.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let asym = (&mat - mat.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 2.0 * HERMITIAN_TOL * scale {
            return Err(Error::NotPositiveDefinite(format!(
                "not conjugate-symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let (mat, floored) = floor_pd(&mat)?;
        Ok(Self { mat, floored })
    }

    /// Wraps a matrix already known to be Hermitian PD (no checks).
    pub(crate) fn from_trusted(mat: CMat) -> Self {
        Self { mat, floored: false }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_trusted(CMat::identity(dim, dim))
    }

    /// Real positive diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex64::new(x, 0.0)));
        Self::new(CMat::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_inner(self) -> CMat {
        self.mat
    }

    pub fn was_floored(&self) -> bool {
        self.floored
    }
}

/// Diagonal matrix with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPd {
    diag: Vec<f64>,
}

impl DiagonalPd {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if let Some(bad) = diag.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain(format!("diagonal entry {bad} is not positive")));
        }
        Ok(Self { diag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.diag
    }

    pub fn to_mat(&self) -> CMat {
        real_diag(&self.diag)
    }
}

pub fn real_diag(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |a, b| {
        if a == b {
            Complex64::new(values[a], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `(A + A^H) / 2`
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Eigendecomposition of the Hermitian part of `a`: `(eigenvalues, eigenvectors)`.
pub fn eigh(a: &CMat) -> (DVector<f64>, CMat) {
    let eig = hermitize(a).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

fn compose(vectors: &CMat, values: impl Iterator<Item = f64>) -> CMat {
    let d: Vec<f64> = values.collect();
    let mut scaled = vectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new(d[k], 0.0);
    }
    hermitize(&(scaled * vectors.adjoint()))
}

/// Clips eigenvalues of the Hermitian part of `a` at `PD_FLOOR * trace / M`.
pub(crate) fn floor_pd(a: &CMat) -> Result<(CMat, bool)> {
    let m = a.nrows();
    let h = hermitize(a);
    let trace: f64 = (0..m).map(|k| h[(k, k)].re).sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::NotPositiveDefinite(format!("trace {trace} is not positive")));
    }
    let floor = PD_FLOOR * trace / m as f64;
    let (values, vectors) = eigh(&h);
    if values.iter().all(|&v| v >= floor) {
        return Ok((h, false));
    }
    Ok((compose(&vectors, values.iter().map(|&v| v.max(floor))), true))
}

pub(crate) fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows()).map(|k| a[(k, k)].re).sum()
}

/// `v^H A v` (real part) for Hermitian `A`.
pub(crate) fn quad_form(a: &CMat, v: &CVec) -> f64 {
    let av = a * v;
    v.dotc(&av).re
}

/// `ln det A` for Hermitian PD `A`, `None` when the Cholesky factorization fails.
pub(crate) fn logdet_hpd(a: &CMat) -> Option<f64> {
    let chol = hermitize(a).cholesky()?;
    let l = chol.l_dirty();
    Some((0..a.nrows()).map(|k| 2.0 * l[(k, k)].re.ln()).sum())
}

pub(crate) fn inv_hpd(a: &CMat) -> Option<CMat> {
    Some(hermitize(&hermitize(a).cholesky()?.inverse()))
}

/// `ln |det W|^2` via LU; `None` when `W` is exactly singular.
pub(crate) fn log_abs_det_sq(w: &CMat) -> Option<f64> {
    let lu = w.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for k in 0..w.nrows() {
        let d = u[(k, k)].norm_sqr();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// Rough 2-norm condition estimate from singular values.
pub fn condition_number(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Frobenius norm.
pub fn fro(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Copy of `a` with the off-diagonal entries zeroed.
pub fn ddiag(a: &CMat) -> CMat {
    let m = a.nrows();
    CMat::from_fn(m, m, |r, c| {
        if r == c {
            Complex64::new(a[(r, r)].re, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, actual: b });
    }
    Ok(())
}

/// Itakura-Saito divergence `w1/w2 - ln(w1/w2) - 1`.
pub fn is_divergence(w1: f64, w2: f64) -> Result<f64> {
    if !(w1 > 0.0) || !(w2 > 0.0) || !w1.is_finite() || !w2.is_finite() {
        return Err(Error::Domain(format!(
            "IS divergence needs positive arguments, got ({w1}, {w2})"
        )));
    }
    Ok(is_divergence_unchecked(w1, w2))
}

#[inline]
pub(crate) fn is_divergence_unchecked(w1: f64, w2: f64) -> f64 {
    let r = w1 / w2;
    r - r.ln() - 1.0
}

/// Log-determinant divergence `tr(A B^-1) - ln det(A B^-1) - M`.
pub fn logdet_divergence(a: &HermitianPd, b: &HermitianPd) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    logdet_divergence_raw(a.as_mat(), b.as_mat())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

pub(crate) fn logdet_divergence_raw(a: &CMat, b: &CMat) -> Option<f64> {
    let m = a.nrows();
    let chol_b = hermitize(b).cholesky()?;
    let tr = trace_re(&chol_b.solve(a));
    let ld = logdet_hpd(a)? - logdet_hpd(b)?;
    Some((tr - ld - m as f64).max(0.0))
}

/// `A^r = U diag(s^r) U^H`.
pub fn matrix_power(a: &HermitianPd, r: f64) -> HermitianPd {
    HermitianPd::from_trusted(matrix_power_raw(a.as_mat(), r))
}

pub(crate) fn matrix_power_raw(a: &CMat, r: f64) -> CMat {
    let (values, vectors) = eigh(a);
    compose(&vectors, values.iter().map(|&s| s.max(f64::MIN_POSITIVE).powf(r)))
}

/// Matrix geometric mean `A # B = A^½ (A^-½ B A^-½)^½ A^½`, the unique PD
/// solution `X` of `X A^-1 X = B`.
pub fn geometric_mean(a: &HermitianPd, b: &HermitianPd) -> Result<HermitianPd> {
    check_dims(a.dim(), b.dim())?;
    Ok(HermitianPd::from_trusted(geometric_mean_raw(a.as_mat(), b.as_mat())))
}

pub(crate) fn geometric_mean_raw(a: &CMat, b: &CMat) -> CMat {
    let (values, vectors) = eigh(a);
    let half = compose(&vectors, values.iter().map(|&s| s.max(f64::MIN_POSITIVE).sqrt()));
    let inv_half = compose(&vectors, values.iter().map(|&s| 1.0 / s.max(f64::MIN_POSITIVE).sqrt()));
    let inner = hermitize(&(&inv_half * b * &inv_half));
    let inner_half = matrix_power_raw(&inner, 0.5);
    hermitize(&(&half * inner_half * &half))
}

/// Result of exactly diagonalizing a pair of PD matrices by congruence.
#[derive(Debug, Clone)]
pub struct JointDiagonalizer {
    /// Columns are the generalized eigenvectors; `W^H R_k W = D_k`.
    pub w: CMat,
    pub d1: DiagonalPd,
    pub d2: DiagonalPd,
}

/// Solves the generalized eigenproblem `R2 W = R1 W Δ` through a Cholesky
/// reduction of `R1`, giving `W^H R1 W = I` and `W^H R2 W = Δ`.
pub fn exact_jd_pair(r1: &HermitianPd, r2: &HermitianPd) -> Result<JointDiagonalizer> {
    check_dims(r1.dim(), r2.dim())?;
    let m = r1.dim();
    let chol = hermitize(r1.as_mat()).cholesky().ok_or(Error::Singular {
        condition: condition_number(r1.as_mat()),
    })?;
    let l = chol.l();
    let diag: Vec<f64> = (0..m).map(|k| l[(k, k)].re).collect();
    let lmax = diag.iter().cloned().fold(0.0, f64::max);
    let lmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = (lmax / lmin).powi(2);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Singular { condition: cond });
    }
    let singular = || Error::Singular { condition: cond };
    // C = L^-1 R2 L^-H
    let left = l.solve_lower_triangular(r2.as_mat()).ok_or_else(singular)?;
    let c = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or_else(singular)?
        .adjoint();
    let (values, vectors) = eigh(&c);
    let w = l.adjoint().solve_upper_triangular(&vectors).ok_or_else(singular)?;
    let d1: Vec<f64> = {
        let t = w.adjoint() * r1.as_mat() * &w;
        (0..m).map(|k| t[(k, k)].re).collect()
    };
    let d2: Vec<f64> = values.iter().cloned().collect();
    Ok(JointDiagonalizer {
        w,
        d1: DiagonalPd::new(d1)?,
        d2: DiagonalPd::new(d2)?,
    })
}
