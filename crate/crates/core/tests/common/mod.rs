//! Fixture generators and coordinate-space oracles shared by the
//! integration tests. The oracles never touch the crate's projection code.

#![allow(dead_code)]

use pfls_core::dataspace::Dataset;
use pfls_core::index::{KnnKind, RangeKind};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Axis-aligned Gaussian with per-axis standard deviations `scales`.
pub fn gaussian_scaled(n: usize, scales: &[f64], seed: u64) -> Dataset {
    let mut rng = rng(seed);
    let d = scales.len();
    let mut v = Vec::with_capacity(n * d);
    for _ in 0..n {
        for s in scales {
            let z: f64 = rng.sample(StandardNormal);
            v.push(z * s);
        }
    }
    Dataset::from_flat(n, d, v).unwrap()
}

pub fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
    gaussian_scaled(n, &vec![1.0; d], seed)
}

/// Uniform in the unit ball.
pub fn uniform_ball(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = rng(seed);
    let mut v = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = normal_vec(&mut rng, d);
        let norm = dot(&z, &z).sqrt();
        let r = rng.random::<f64>().powf(1.0 / d as f64);
        v.extend(z.iter().map(|x| x / norm * r));
    }
    Dataset::from_flat(n, d, v).unwrap()
}

/// `±e_i` for every axis: normalized second moment `I / d`.
pub fn cross_polytope(d: usize) -> Dataset {
    let mut rows = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut r = vec![0.0; d];
            r[i] = s;
            rows.push(r);
        }
    }
    Dataset::from_rows(&rows).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Modified Gram–Schmidt on explicit vectors with the same relative
/// dependence rule as the library. Returns the orthonormal directions and
/// the indices of the vectors kept.
pub fn gram_schmidt(vectors: &[Vec<f64>], threshold: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let sq = dot(v, v);
        let mut w = v.clone();
        for b in &basis {
            let t = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(a, b)| *a -= t * b);
        }
        let res = dot(&w, &w);
        if sq <= 0.0 || res <= threshold * sq {
            continue;
        }
        let norm = res.sqrt();
        w.iter_mut().for_each(|a| *a /= norm);
        basis.push(w);
        kept.push(i);
    }
    (basis, kept)
}

/// Value of a knn/range kind computed directly from coordinates.
pub fn coord_value(row: &[f64], q: &[f64], distance: bool) -> f64 {
    if distance {
        sq_dist(row, q).sqrt()
    } else {
        dot(row, q)
    }
}

fn knn_key(kind: KnnKind, v: f64) -> f64 {
    match kind {
        KnnKind::SmallestDistance | KnnKind::SmallestIp => v,
        KnnKind::LargestDistance | KnnKind::LargestIp => -v,
    }
}

/// Top `n` by a full sort on coordinates, ties towards smaller ids.
pub fn oracle_knn(data: &Dataset, q: &[f64], n: usize, kind: KnnKind) -> Vec<(usize, f64)> {
    let distance = matches!(kind, KnnKind::SmallestDistance | KnnKind::LargestDistance);
    let mut all: Vec<(usize, f64)> = data
        .rows()
        .enumerate()
        .map(|(i, r)| (i, coord_value(r, q, distance)))
        .collect();
    all.sort_by(|a, b| {
        knn_key(kind, a.1)
            .total_cmp(&knn_key(kind, b.1))
            .then(a.0.cmp(&b.0))
    });
    all.truncate(n);
    all
}

pub fn oracle_range(data: &Dataset, q: &[f64], eps: f64, kind: RangeKind) -> Vec<(usize, f64)> {
    data.rows()
        .enumerate()
        .filter_map(|(i, r)| {
            let v = coord_value(r, q, kind == RangeKind::DistanceWithin);
            let keep = match kind {
                RangeKind::DistanceWithin => v < eps,
                RangeKind::IpAtLeast => v >= eps,
                RangeKind::IpAtMost => v <= eps,
            };
            keep.then_some((i, v))
        })
        .collect()
}

/// Median over all pairs `i < j` of row distances (upper median).
pub fn median_pairwise_distance(data: &Dataset) -> f64 {
    let mut d = Vec::new();
    for i in 0..data.n() {
        for j in i + 1..data.n() {
            d.push(sq_dist(data.row(i), data.row(j)).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Trace of the second-moment matrix about the origin, from coordinates.
pub fn total_var_origin(data: &Dataset) -> f64 {
    data.rows().map(|r| dot(r, r)).sum::<f64>() / data.n() as f64
}

/// Smallest relative residual of any member of any `k`-subset against the
/// others, on coordinates.
pub fn min_subset_residual(data: &Dataset, center: &[f64], k: usize) -> f64 {
    let shifted: Vec<Vec<f64>> = data.rows().map(|r| sub(r, center)).collect();
    let mut worst = f64::INFINITY;
    for mask in 1u32..(1 << data.n()) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let members: Vec<Vec<f64>> = (0..data.n())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| shifted[i].clone())
            .collect();
        for last in 0..k {
            let mut order = members.clone();
            order.swap(last, k - 1);
            let (basis, _) = gram_schmidt(&order[..k - 1], 0.0);
            let mut w = order[k - 1].clone();
            for b in &basis {
                let t = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= t * y);
            }
            worst = worst.min(dot(&w, &w) / dot(&order[k - 1], &order[k - 1]));
        }
    }
    worst
}

/// Full-rank `n = 8`, `d = 3` Gaussian fixtures whose pivot triples are all
/// well conditioned under both centerings. Near-dependent triples lose
/// accuracy to cancellation in `|r|^2 - Σ t^2`.
pub fn well_conditioned_fixtures(count: usize) -> Vec<Dataset> {
    (100..)
        .map(|seed| gaussian(8, 3, seed))
        .filter(|d| {
            min_subset_residual(d, &[0.0; 3], 3) >= 1e-6
                && min_subset_residual(d, &d.mean(), 3) >= 1e-6
        })
        .take(count)
        .collect()
}
