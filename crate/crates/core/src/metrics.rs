//! Separation metrics: scale-invariant SDR and SCM estimation error.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{fro, trace_re, CMat, RMat};
use crate::matching::min_cost_assignment;
use crate::stft::{MultichannelWave, Spectrogram};

/// Reported in place of an infinite SI-SDR.
pub const SDR_CAP_DB: f64 = 100.0;

fn cap(db: f64) -> f64 {
    if db.is_nan() {
        SDR_CAP_DB
    } else {
        db.min(SDR_CAP_DB)
    }
}

/// `10 log10(‖α s‖² / ‖x̂ - α s‖²)` with `α` the least-squares projection
/// coefficient of `estimate` onto `reference`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    let energy: f64 = reference.iter().map(|r| r * r).sum();
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("reference has zero energy".into()));
    }
    let alpha = estimate.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / energy;
    let target = alpha * alpha * energy;
    let noise: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - alpha * r).powi(2))
        .sum();
    Ok(cap(10.0 * (target / noise).log10()))
}

/// Complex variant with a complex projection coefficient.
pub fn si_sdr_complex(estimate: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: estimate.len(),
        });
    }
    let energy: f64 = reference.iter().map(|r| r.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("reference has zero energy".into()));
    }
    let alpha = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| e * r.conj())
        .sum::<Complex64>()
        / energy;
    let target = alpha.norm_sqr() * energy;
    let noise: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - alpha * r).norm_sqr())
        .sum();
    Ok(cap(10.0 * (target / noise).log10()))
}

pub fn si_sdr_wave(estimate: &MultichannelWave, reference: &MultichannelWave) -> Result<f64> {
    if estimate.channels() != reference.channels() {
        return Err(Error::DimensionMismatch {
            expected: reference.channels(),
            actual: estimate.channels(),
        });
    }
    let flat = |w: &MultichannelWave| w.samples().concat();
    si_sdr(&flat(estimate), &flat(reference))
}

pub fn si_sdr_spec(estimate: &Spectrogram, reference: &Spectrogram) -> Result<f64> {
    if !estimate.same_shape(reference) {
        return Err(Error::Shape("spectrogram shapes differ".into()));
    }
    si_sdr_complex(estimate.values(), reference.values())
}

/// Per-reference scores after the source permutation maximizing total score.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedScores {
    /// `scores[n]` compares reference `n` with estimate `perm[n]`.
    pub scores: Vec<f64>,
    pub perm: Vec<usize>,
}

impl MatchedScores {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Scores every (reference, estimate) pair with `score` and keeps the best
/// one-to-one assignment.
pub fn match_scores<T>(
    estimates: &[T],
    references: &[T],
    score: impl Fn(&T, &T) -> Result<f64>,
) -> Result<MatchedScores> {
    if estimates.len() != references.len() || references.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: references.len(),
            actual: estimates.len(),
        });
    }
    let n = references.len();
    let mut table = RMat::zeros(n, n);
    for (r, reference) in references.iter().enumerate() {
        for (e, estimate) in estimates.iter().enumerate() {
            table[(r, e)] = score(estimate, reference)?;
        }
    }
    let perm = min_cost_assignment(&table.map(|v| -v));
    let scores = perm.iter().enumerate().map(|(r, &e)| table[(r, e)]).collect();
    Ok(MatchedScores { scores, perm })
}

/// SCM error after trace normalization and one global source permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmError {
    pub value: f64,
    /// Truth source `n` is matched with estimate `perm[n]`.
    pub perm: Vec<usize>,
}

fn unit_trace(r: &CMat) -> Result<CMat> {
    let t = trace_re(r);
    if !(t.abs() > 0.0) || !t.is_finite() {
        return Err(Error::Domain("SCM with zero trace".into()));
    }
    Ok(r.unscale(t))
}

/// `(1/(IN)) Σ_in ‖R̂_in - R_in‖_F²` with both scaled to unit trace; inputs
/// indexed `[i][n]`.
pub fn scm_error(estimated: &[Vec<CMat>], truth: &[Vec<CMat>]) -> Result<ScmError> {
    if estimated.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: estimated.len(),
        });
    }
    let n = truth[0].len();
    if estimated.iter().chain(truth).any(|b| b.len() != n) {
        return Err(Error::Shape("source counts differ".into()));
    }
    let mut cost = RMat::zeros(n, n);
    for (est, tru) in estimated.iter().zip(truth) {
        let est: Vec<CMat> = est.iter().map(unit_trace).collect::<Result<_>>()?;
        let tru: Vec<CMat> = tru.iter().map(unit_trace).collect::<Result<_>>()?;
        for (a, t) in tru.iter().enumerate() {
            for (b, e) in est.iter().enumerate() {
                if e.shape() != t.shape() {
                    return Err(Error::Shape("SCM sizes differ".into()));
                }
                cost[(a, b)] += fro(&(e - t)).powi(2);
            }
        }
    }
    let perm = min_cost_assignment(&cost);
    let total: f64 = perm.iter().enumerate().map(|(a, &b)| cost[(a, b)]).sum();
    Ok(ScmError {
        value: total / (truth.len() * n) as f64,
        perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::random::{complex_gaussian_matrix, standard_normal};
    use crate::testutil::random_hpd;

    #[test]
    fn sdr_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..1000).map(|_| standard_normal(&mut rng)).collect();
        assert_eq!(si_sdr(&s, &s).unwrap(), SDR_CAP_DB);
        let twice: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&twice, &s).unwrap(), SDR_CAP_DB);
        // orthogonal noise of equal power: alternate-sign pattern
        let r = vec![1.0, 1.0, 1.0, 1.0];
        let e = vec![2.0, 0.0, 2.0, 0.0];
        assert!(si_sdr(&e, &r).unwrap().abs() < 1e-12);
        assert!(si_sdr(&r, &[0.0; 4]).is_err());
        assert!(si_sdr(&r, &[1.0; 3]).is_err());
    }

    #[test]
    fn sdr_falls_as_noise_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..2000).map(|_| standard_normal(&mut rng)).collect();
        let noise: Vec<f64> = (0..2000).map(|_| standard_normal(&mut rng)).collect();
        let mut last = f64::INFINITY;
        for level in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let e: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| 0.7 * a + level * b).collect();
            let v = si_sdr(&e, &s).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn complex_sdr_phase_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<Complex64> = complex_gaussian_matrix(&mut rng, 50, 1).iter().cloned().collect();
        let n: Vec<Complex64> = complex_gaussian_matrix(&mut rng, 50, 1).iter().cloned().collect();
        let e: Vec<Complex64> = s.iter().zip(&n).map(|(a, b)| a + b * 0.3).collect();
        let rot: Vec<Complex64> = e.iter().map(|v| v * Complex64::from_polar(2.0, 1.1)).collect();
        assert!((si_sdr_complex(&e, &s).unwrap() - si_sdr_complex(&rot, &s).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn matched_scores_undo_permutation() {
        let a = vec![1.0, 0.0, 0.0, 1.0];
        let b = vec![0.0, 1.0, 1.0, 0.0];
        let m = match_scores(&[b.clone(), a.clone()], &[a, b], |e, r| si_sdr(e, r)).unwrap();
        assert_eq!(m.perm, vec![1, 0]);
        assert_eq!(m.mean(), SDR_CAP_DB);
    }

    #[test]
    fn scm_error_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth: Vec<Vec<CMat>> = (0..3)
            .map(|_| (0..3).map(|_| random_hpd(&mut rng, 2).into_inner()).collect())
            .collect();
        assert!(scm_error(&truth, &truth).unwrap().value < 1e-20);
        // scaling and relabeling are ignored
        let shuffled: Vec<Vec<CMat>> = truth
            .iter()
            .map(|b| vec![b[2].scale(3.0), b[0].scale(0.1), b[1].clone()])
            .collect();
        let e = scm_error(&shuffled, &truth).unwrap();
        assert!(e.value < 1e-20);
        assert_eq!(e.perm, vec![1, 2, 0]);
        // R̂ = R + εE with tr E = 0 keeps the trace: error is ε²‖E‖²/tr(R)² averaged
        let eps = 1e-3;
        let pert = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(-1.0, 0.0),
            ],
        );
        let est: Vec<Vec<CMat>> = truth
            .iter()
            .map(|b| b.iter().map(|r| r + pert.scale(eps)).collect())
            .collect();
        let oracle: f64 = truth
            .iter()
            .flatten()
            .map(|r| eps * eps * fro(&pert).powi(2) / trace_re(r).powi(2))
            .sum::<f64>()
            / 9.0;
        assert!((scm_error(&est, &truth).unwrap().value - oracle).abs() < 1e-12 * oracle.max(1e-30) + 1e-18);
        let zero = vec![vec![CMat::zeros(2, 2); 3]; 3];
        assert!(scm_error(&zero, &truth).is_err());
    }
}
