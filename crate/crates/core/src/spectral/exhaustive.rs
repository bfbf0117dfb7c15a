use super::space::Space;
use crate::error::{Error, Result};
use crate::pivotframe::DEPENDENCE_THRESHOLD;

/// Largest number of `k`-subsets the exhaustive estimator will enumerate.
pub const EXHAUSTIVE_BUDGET: u128 = 1_000_000;

/// `max_{k <= k_max} C(n, k)`, saturating.
pub(crate) fn max_subsets(n: usize, k_max: usize) -> u128 {
    let mut c: u128 = 1;
    let mut best = 1;
    for k in 1..=k_max.min(n) {
        c = c.saturating_mul((n - k + 1) as u128) / k as u128;
        best = best.max(c);
    }
    best
}

struct Walk<'s, 'a> {
    space: &'s Space<'a>,
    k_max: usize,
    /// `coeffs[level][x] = <x - c, r̂_level>` along the current path.
    coeffs: Vec<Vec<f64>>,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Walk<'_, '_> {
    /// Extends the current subset by every member `>= start` in turn.
    fn descend(&mut self, start: usize, depth: usize, covered: f64) {
        let m = self.space.len();
        for s in start..m {
            let sq = self.space.sqnorm(s);
            let prev: Vec<f64> = (0..depth).map(|j| self.coeffs[j][s]).collect();
            let res = sq - prev.iter().map(|t| t * t).sum::<f64>();
            // Supersets of a dependent set are dependent too, so the whole
            // subtree is skipped.
            if !(sq > 0.0) || res <= DEPENDENCE_THRESHOLD * sq {
                continue;
            }
            let denom = res.sqrt();
            let mut gained = 0.0;
            for x in 0..m {
                let mut num = self.space.ip(x, s);
                for (j, t) in prev.iter().enumerate() {
                    num -= self.coeffs[j][x] * t;
                }
                let c = num / denom;
                self.coeffs[depth][x] = c;
                gained += c * c;
            }
            let total = covered + gained / m as f64;
            self.sums[depth] += total;
            self.counts[depth] += 1;
            if depth + 1 < self.k_max {
                self.descend(s + 1, depth + 1, total);
            }
        }
    }
}

/// `E^Σ_k` for `k = 1..=k_max`, averaged over every unordered `k`-subset of
/// linearly independent view members.
pub(crate) fn esum_exhaustive(space: &Space<'_>, k_max: usize) -> Result<Vec<f64>> {
    let m = space.len();
    let required = max_subsets(m, k_max);
    if required > EXHAUSTIVE_BUDGET {
        return Err(Error::Budget {
            required,
            limit: EXHAUSTIVE_BUDGET,
        });
    }
    let mut walk = Walk {
        space,
        k_max,
        coeffs: vec![vec![0.0; m]; k_max],
        sums: vec![0.0; k_max],
        counts: vec![0; k_max],
    };
    if k_max > 0 {
        walk.descend(0, 0, 0.0);
    }
    walk.sums
        .iter()
        .zip(&walk.counts)
        .enumerate()
        .map(|(k, (&s, &c))| {
            if c == 0 {
                Err(Error::InsufficientRank {
                    needed: k + 1,
                    found: k,
                })
            } else {
                Ok(s / c as f64)
            }
        })
        .collect()
}
