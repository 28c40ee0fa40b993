//! Minimum-cost one-to-one assignment.

use itertools::Itertools;
use pathfinding::prelude::{kuhn_munkres_min, Matrix};

use crate::linalg::RMat;

/// Largest size solved by enumerating permutations.
const EXHAUSTIVE_MAX: usize = 6;

/// Permutation `p` minimizing `Σ_n cost[(n, p[n])]` for a square cost matrix.
pub fn min_cost_assignment(cost: &RMat) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    if n <= EXHAUSTIVE_MAX {
        return (0..n)
            .permutations(n)
            .map(|p| (p.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum::<f64>(), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, p)| p)
            .unwrap_or_default();
    }
    let scale = cost.amax().max(f64::MIN_POSITIVE);
    let weights = Matrix::from_fn(n, n, |(r, c)| (cost[(r, c)] / scale * 1e12).round() as i64);
    kuhn_munkres_min(&weights).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_swap() {
        let c = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(min_cost_assignment(&c), vec![0, 1]);
        let c = RMat::from_row_slice(2, 2, &[5.0, 1.0, 1.0, 5.0]);
        assert_eq!(min_cost_assignment(&c), vec![1, 0]);
    }

    #[test]
    fn hungarian_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = RMat::from_fn(7, 7, |_, _| rng.random::<f64>());
            let fast = min_cost_assignment(&c);
            let total = |p: &[usize]| p.iter().enumerate().map(|(r, &k)| c[(r, k)]).sum::<f64>();
            let best = (0..7).permutations(7).map(|p| total(&p)).fold(f64::INFINITY, f64::min);
            assert!((total(&fast) - best).abs() < 1e-9);
        }
    }
}
