use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::RealMatrix;

/// Latin Hypercube design of `n` points, one row per point.
///
/// Each dimension splits `[0, 1)` into `n` equal strata, draws one uniform
/// point inside every stratum and assigns strata to rows by an independent
/// random permutation. Values are then mapped affinely onto `ranges`.
pub fn lhs_sample(n: usize, ranges: &[(f64, f64)], seed: u64) -> RealMatrix {
    let d = ranges.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = RealMatrix::zeros(n, d);
    let mut order: Vec<usize> = (0..n).collect();
    for (k, &(lo, hi)) in ranges.iter().enumerate() {
        order.shuffle(&mut rng);
        for (row, &stratum) in order.iter().enumerate() {
            let u = (stratum as f64 + rng.gen::<f64>()) / n as f64;
            out[(row, k)] = lo + (hi - lo) * u;
        }
    }
    out
}
