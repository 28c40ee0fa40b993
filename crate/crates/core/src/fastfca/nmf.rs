//! Itakura-Saito NMF updates of the loadings `L` and activations `H` given
//! decorrelated powers `U ≈ L H`.

use crate::linalg::{is_divergence_unchecked, RMat};

/// `Σ_mj D_IS(U_mj | [LH]_mj)`.
pub fn is_cost(u: &RMat, l: &RMat, h: &RMat) -> f64 {
    let lh = l * h;
    u.iter()
        .zip(lh.iter())
        .map(|(&a, &b)| is_divergence_unchecked(a.max(f64::MIN_POSITIVE), b))
        .sum()
}

/// Per-source gains `G_n = (L_:n H_n:) ⊘ (L H)`, each `M × J`.
pub fn em_gains(l: &RMat, h: &RMat) -> Vec<RMat> {
    let lh = l * h;
    (0..l.ncols())
        .map(|n| RMat::from_fn(l.nrows(), h.ncols(), |m, j| l[(m, n)] * h[(n, j)] / lh[(m, j)]))
        .collect()
}

fn clamp(x: &mut RMat, floor: f64) {
    x.iter_mut().for_each(|v| {
        if !(*v > floor) {
            *v = floor;
        }
    });
}

/// EM updates, source by source: posterior powers
/// `Φ_n = G_n² U + (1 - G_n) L_:n H_n:`, then `L_:n` and `H_n:` from `Φ_n`.
pub fn em_update_lh(u: &RMat, l: &mut RMat, h: &mut RMat, floor: f64) {
    let (dim, blocks) = u.shape();
    for n in 0..l.ncols() {
        let lh = &*l * &*h;
        let phi = RMat::from_fn(dim, blocks, |m, j| {
            let part = l[(m, n)] * h[(n, j)];
            let g = part / lh[(m, j)];
            g * g * u[(m, j)] + (1.0 - g) * part
        });
        for m in 0..dim {
            let s: f64 = (0..blocks).map(|j| phi[(m, j)] / h[(n, j)]).sum();
            l[(m, n)] = (s / blocks as f64).max(floor);
        }
        for j in 0..blocks {
            let s: f64 = (0..dim).map(|m| phi[(m, j)] / l[(m, n)]).sum();
            h[(n, j)] = (s / dim as f64).max(floor);
        }
    }
}

/// MM multiplicative updates of `L` then `H`, each with exponent ½.
pub fn mm_update_lh(u: &RMat, l: &mut RMat, h: &mut RMat, floor: f64) {
    let ratios = |l: &RMat, h: &RMat| {
        let lh = l * h;
        let inv = lh.map(|v| 1.0 / v);
        let weighted = u.component_mul(&inv.component_mul(&inv));
        (weighted, inv)
    };
    let (num_w, den_w) = ratios(l, h);
    let num = &num_w * h.transpose();
    let den = &den_w * h.transpose();
    l.zip_zip_apply(&num, &den, |x, a, b| *x *= (a / b).sqrt());
    clamp(l, floor);
    let (num_w, den_w) = ratios(l, h);
    let num = l.transpose() * &num_w;
    let den = l.transpose() * &den_w;
    h.zip_zip_apply(&num, &den, |x, a, b| *x *= (a / b).sqrt());
    clamp(h, floor);
}

/// Moves the mean of each activation row into the matching loading column.
pub fn balance_lh(l: &mut RMat, h: &mut RMat) {
    for n in 0..l.ncols() {
        let s = h.row(n).mean();
        if s > 0.0 && s.is_finite() {
            h.row_mut(n).unscale_mut(s);
            l.column_mut(n).scale_mut(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::random::log_uniform;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> RMat {
        RMat::from_fn(r, c, |_, _| log_uniform(rng, 0.1, 10.0))
    }

    #[test]
    fn em_scalar_collapse() {
        let u = RMat::from_element(1, 1, 6.0);
        let mut l = RMat::from_element(1, 1, 2.0);
        let mut h = RMat::from_element(1, 1, 4.0);
        em_update_lh(&u, &mut l, &mut h, 0.0);
        // L ← U/H = 1.5, then H ← U/L = 4
        assert!((l[(0, 0)] - 1.5).abs() < 1e-14);
        assert!((h[(0, 0)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn em_single_source_fit_keeps_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l0 = random(&mut rng, 3, 1);
        let h0 = random(&mut rng, 1, 7);
        let u = &l0 * &h0;
        let (mut l, mut h) = (l0.clone(), h0.clone());
        em_update_lh(&u, &mut l, &mut h, 0.0);
        assert!((&l * &h - &u).amax() < 1e-12 * u.amax());
    }

    #[test]
    fn gains_partition_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = random(&mut rng, 3, 4);
        let h = random(&mut rng, 4, 9);
        let g = em_gains(&l, &h);
        let sum = g.iter().fold(RMat::zeros(3, 9), |a, b| a + b);
        assert!(sum.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(g.iter().flatten().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn mm_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l0 = random(&mut rng, 3, 2);
        let h0 = random(&mut rng, 2, 6);
        let u = &l0 * &h0;
        let (mut l, mut h) = (l0.clone(), h0.clone());
        mm_update_lh(&u, &mut l, &mut h, 0.0);
        assert!((&l - &l0).amax() < 1e-12 * l0.amax());
        assert!((&h - &h0).amax() < 1e-12 * h0.amax());
    }

    #[test]
    fn mm_scalar_iteration() {
        let u = RMat::from_element(1, 1, 8.0);
        let mut l = RMat::from_element(1, 1, 1.0);
        let mut h = RMat::from_element(1, 1, 2.0);
        let c0 = is_cost(&u, &l, &h);
        mm_update_lh(&u, &mut l, &mut h, 0.0);
        // L ← 1·sqrt(8/2) = 2, then LH = 4 = U... H ← 2·sqrt(8/4)
        assert!((l[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((h[(0, 0)] - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert!(is_cost(&u, &l, &h) < c0);
    }

    #[test]
    fn both_flavors_monotone() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
            let u = random(&mut rng, 3, 20);
            for em in [true, false] {
                let mut l = random(&mut rng, 3, 3);
                let mut h = random(&mut rng, 3, 20);
                let mut prev = is_cost(&u, &l, &h);
                for _ in 0..50 {
                    if em {
                        em_update_lh(&u, &mut l, &mut h, 1e-12);
                    } else {
                        mm_update_lh(&u, &mut l, &mut h, 1e-12);
                    }
                    let c = is_cost(&u, &l, &h);
                    assert!(c <= prev + 1e-10 * prev.abs(), "{prev} -> {c}");
                    prev = c;
                }
            }
        }
    }

    #[test]
    fn balance_keeps_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut l = random(&mut rng, 3, 2);
        let mut h = random(&mut rng, 2, 5);
        let before = &l * &h;
        balance_lh(&mut l, &mut h);
        assert!((&l * &h - before).amax() < 1e-12 * l.amax() * h.amax());
        for n in 0..2 {
            assert!((h.row(n).mean() - 1.0).abs() < 1e-12);
        }
    }
}
