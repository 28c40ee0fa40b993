//! Iterative projection updates of the decorrelation matrix.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{floor_pd, fro, hermitize, log_abs_det_sq, quad_form, CMat, CVec, RMat};
use crate::random::complex_gaussian_matrix;

fn raw_weighted_cov(covs: &[CMat], vars: &[f64]) -> Result<CMat> {
    if covs.len() != vars.len() || covs.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: covs.len(),
            actual: vars.len(),
        });
    }
    let m = covs[0].nrows();
    let mut q = CMat::zeros(m, m);
    for (x, &s) in covs.iter().zip(vars) {
        q += x.unscale(s.max(f64::MIN_POSITIVE));
    }
    Ok(hermitize(&q.unscale(covs.len() as f64)))
}

/// `Q_m = (1/J) Σ_j X̂_j / σ²_mj` for one channel's variance row, with an
/// eigenvalue floor.
pub fn weighted_cov(covs: &[CMat], vars: &[f64]) -> Result<CMat> {
    Ok(floor_pd(&raw_weighted_cov(covs, vars)?)?.0)
}

fn solve_column(w: &CMat, q: &CMat, m: usize) -> Option<CVec> {
    let a = w.adjoint() * q;
    let mut e = DVector::from_element(w.nrows(), Complex64::new(0.0, 0.0));
    e[m] = Complex64::new(1.0, 0.0);
    let col = a.lu().solve(&e)?;
    let norm = quad_form(q, &col);
    if !(norm > 0.0) || !norm.is_finite() || col.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(col.unscale(norm.sqrt()))
}

/// Part of the cost that depends on column `m` of `W`:
/// `-ln|det W|² + w_m^H Q_m w_m`.
fn column_cost(w: &CMat, q: &CMat, m: usize) -> f64 {
    match log_abs_det_sq(w) {
        Some(ld) => quad_form(q, &w.column(m).into_owned()) - ld,
        None => f64::INFINITY,
    }
}

/// Best candidate for column `m`: the exact solve, then the solve against
/// the floored `Q_m`, then the same after nudging `W` off the singular set.
fn candidates(w: &CMat, q: &CMat, m: usize) -> Result<Vec<CMat>> {
    let mut out = Vec::new();
    let with = |base: &CMat, col: CVec| {
        let mut c = base.clone();
        c.set_column(m, &col);
        c
    };
    if let Some(col) = solve_column(w, q, m) {
        out.push(with(w, col));
    }
    let (floored, changed) = floor_pd(q)?;
    if changed {
        if let Some(col) = solve_column(w, &floored, m) {
            // rescale against the exact Q
            let norm = quad_form(q, &col);
            if norm > 0.0 && norm.is_finite() {
                out.push(with(w, col.unscale(norm.sqrt())));
            }
        }
    }
    if out.is_empty() {
        let dim = w.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        let scale = 1e-8 * fro(w).max(1.0);
        let perturbed = w + complex_gaussian_matrix(&mut rng, dim, dim).scale(scale);
        if let Some(col) = solve_column(&perturbed, q, m).or_else(|| solve_column(&perturbed, &floored, m)) {
            out.push(with(&perturbed, col));
        }
    }
    Ok(out)
}

/// One IP sweep: for each `m`, `w_m ← (W^H Q_m)^-1 e_m`, then scale so that
/// `w_m^H Q_m w_m = 1`. `vars` is the `M × J` matrix `σ²`. A column is only
/// replaced when the exact cost goes down, which keeps the sweep monotone
/// when `Q_m` is too ill-conditioned for an accurate solve.
pub fn ip_update_w(covs: &[CMat], w: &CMat, vars: &RMat) -> Result<CMat> {
    let dim = w.nrows();
    if vars.nrows() != dim || vars.ncols() != covs.len() {
        return Err(Error::Shape("variance matrix does not match W and data".into()));
    }
    let mut w = w.clone();
    for m in 0..dim {
        let row: Vec<f64> = vars.row(m).iter().cloned().collect();
        let q = raw_weighted_cov(covs, &row)?;
        let current = column_cost(&w, &q, m);
        let best = candidates(&w, &q, m)?
            .into_iter()
            .map(|c| (column_cost(&c, &q, m), c))
            .filter(|(cost, _)| cost.is_finite())
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((cost, c)) if cost <= current || !current.is_finite() => w = c,
            Some(_) => {}
            None if current.is_finite() => {}
            None => {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                })
            }
        }
    }
    Ok(w)
}
