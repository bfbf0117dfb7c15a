use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::space::Space;
use crate::error::{Error, Result};
use crate::pivotframe::DEPENDENCE_THRESHOLD;

/// The generator for sample `index`: stream `index` of the seeded ChaCha8
/// generator, so every sample is reproducible on its own and results do not
/// depend on how samples are scheduled across threads.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws distinct members uniformly, without replacement.
struct Draws {
    pool: Vec<usize>,
}

impl Draws {
    fn new(m: usize) -> Self {
        Self {
            pool: (0..m).collect(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> Option<usize> {
        if self.pool.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.pool.len());
        Some(self.pool.swap_remove(i))
    }
}

/// Variance gained by each of `k_max` pivots drawn in order, through inner
/// products only.
pub(crate) fn sample_increments_ip(
    space: &Space<'_>,
    k_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let m = space.len();
    let mut draws = Draws::new(m);
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(k_max);
    let mut out = Vec::with_capacity(k_max);
    while out.len() < k_max {
        let s = draws.next(rng).ok_or(Error::InsufficientRank {
            needed: k_max,
            found: out.len(),
        })?;
        let sq = space.sqnorm(s);
        let prev: Vec<f64> = coeffs.iter().map(|c| c[s]).collect();
        let res = sq - prev.iter().map(|t| t * t).sum::<f64>();
        if !(sq > 0.0) || res <= DEPENDENCE_THRESHOLD * sq {
            continue;
        }
        let denom = res.sqrt();
        let mut level = vec![0.0; m];
        let mut gained = 0.0;
        for (x, slot) in level.iter_mut().enumerate() {
            let mut num = space.ip(x, s);
            for (c, t) in coeffs.iter().zip(&prev) {
                num -= c[x] * t;
            }
            *slot = num / denom;
            gained += *slot * *slot;
        }
        coeffs.push(level);
        out.push(gained / m as f64);
    }
    Ok(out)
}

/// Same quantity for explicit vectors: the gain of direction `r̂` is
/// `r̂ᵀ M r̂` with `M` the second-moment matrix of the centered data.
pub(crate) fn sample_increments_moment(
    vectors: &[DVector<f64>],
    moment: &DMatrix<f64>,
    k_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut draws = Draws::new(vectors.len());
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k_max);
    let mut out = Vec::with_capacity(k_max);
    while out.len() < k_max {
        let s = draws.next(rng).ok_or(Error::InsufficientRank {
            needed: k_max,
            found: out.len(),
        })?;
        let r = &vectors[s];
        let sq = r.norm_squared();
        // Classical Gram–Schmidt coefficients, matching the inner-product
        // route's dependence test, followed by one reorthogonalization pass.
        let mut v = r.clone();
        let mut proj_sq = 0.0;
        for b in &basis {
            let t = b.dot(r);
            proj_sq += t * t;
            v.axpy(-t, b, 1.0);
        }
        let res = sq - proj_sq;
        if !(sq > 0.0) || res <= DEPENDENCE_THRESHOLD * sq {
            continue;
        }
        for b in &basis {
            let t = b.dot(&v);
            v.axpy(-t, b, 1.0);
        }
        v /= v.norm();
        out.push((moment * &v).dot(&v));
        basis.push(v);
    }
    Ok(out)
}
