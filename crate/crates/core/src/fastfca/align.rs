//! Cross-frequency source alignment by correlating activation envelopes
//! with a running centroid.

use crate::linalg::RMat;
use crate::matching::min_cost_assignment;
use crate::model::FastFcaParams;

fn normalized_rows(h: &RMat) -> RMat {
    let mut e = h.clone();
    for mut row in e.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
        let norm = row.norm();
        if norm > 0.0 {
            row.unscale_mut(norm);
        }
    }
    e
}

/// Permutes the sources of every bin so activation envelopes line up across
/// frequencies. Returns the permutation applied to each bin; source `n` of
/// the aligned bin is source `perm[n]` of the original.
pub fn align_permutations(params: &mut FastFcaParams) -> Vec<Vec<usize>> {
    let n_src = params.sources();
    let mut centroid: Option<RMat> = None;
    let mut perms = Vec::with_capacity(params.freqs());
    for bin in &mut params.bins {
        let env = normalized_rows(&bin.acts);
        let perm = match &centroid {
            None => (0..n_src).collect(),
            Some(c) => {
                let corr = c * env.transpose();
                min_cost_assignment(&corr.map(|v| -v))
            }
        };
        bin.permute(&perm);
        let aligned = normalized_rows(&bin.acts);
        centroid = Some(match centroid {
            None => aligned,
            Some(c) => c + aligned,
        });
        perms.push(perm);
    }
    perms
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::testutil::random_fastfca;

    #[test]
    fn scrambled_bins_are_restored() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = random_fastfca(&mut rng, 1, 50, 2, 3);
        let mut params = FastFcaParams {
            bins: vec![base.bins[0].clone(); 6],
        };
        for (i, b) in params.bins.iter_mut().enumerate() {
            b.acts = b.acts.map(|v| v * (1.0 + 0.05 * i as f64));
            let perm = [[0, 1, 2], [2, 0, 1], [1, 2, 0], [0, 2, 1], [2, 1, 0], [1, 0, 2]][i];
            b.permute(&perm);
        }
        align_permutations(&mut params);
        let first = normalized_rows(&params.bins[0].acts);
        for b in &params.bins[1..] {
            assert!((normalized_rows(&b.acts) - &first).amax() < 1e-12);
        }
    }
}
