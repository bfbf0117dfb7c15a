//! Pivot-filtering linear scan.
//!
//! Every query first projects the query point onto the pivot frame, bounds
//! the distance (or inner product) to every dataset point in one pass, and
//! only evaluates the exact value where the bounds cannot decide.

mod brute;
mod serialize;

pub use brute::{brute_force_knn, brute_force_range};
pub use serialize::{INDEX_MAGIC, INDEX_VERSION};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataspace::{Center, CenterSpec, Dataset, InnerProduct, PointRef};
use crate::error::{Error, Result};
use crate::pivotframe::{
    ip_mid_half, BoundKind, BoundsInterval, FrameBuilder, PivotFrame, Projection,
};

/// Relative inflation applied to residuals and midpoints before pruning, so
/// that floating-point error in the coefficient recursion can never prune a
/// true result.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnKind {
    SmallestDistance,
    LargestDistance,
    SmallestIp,
    LargestIp,
}

impl KnnKind {
    pub const ALL: [KnnKind; 4] = [
        KnnKind::SmallestDistance,
        KnnKind::LargestDistance,
        KnnKind::SmallestIp,
        KnnKind::LargestIp,
    ];

    pub fn is_distance(self) -> bool {
        matches!(self, KnnKind::SmallestDistance | KnnKind::LargestDistance)
    }

    fn is_largest(self) -> bool {
        matches!(self, KnnKind::LargestDistance | KnnKind::LargestIp)
    }

    /// Maps a value to the key that the scan minimizes.
    #[inline]
    fn key(self, value: f64) -> f64 {
        if self.is_largest() {
            -value
        } else {
            value
        }
    }
}

impl std::str::FromStr for KnnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smallest-distance" => Ok(Self::SmallestDistance),
            "largest-distance" => Ok(Self::LargestDistance),
            "smallest-ip" => Ok(Self::SmallestIp),
            "largest-ip" => Ok(Self::LargestIp),
            _ => Err(Error::Parameter(format!("unknown knn kind '{s}'"))),
        }
    }
}

/// Range predicates. Distances use the strict `d < eps`; the inner-product
/// kinds are inclusive (`ip >= eps`, `ip <= eps`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeKind {
    DistanceWithin,
    IpAtLeast,
    IpAtMost,
}

impl RangeKind {
    pub const ALL: [RangeKind; 3] = [
        RangeKind::DistanceWithin,
        RangeKind::IpAtLeast,
        RangeKind::IpAtMost,
    ];

    pub fn accepts(self, value: f64, eps: f64) -> bool {
        match self {
            RangeKind::DistanceWithin => value < eps,
            RangeKind::IpAtLeast => value >= eps,
            RangeKind::IpAtMost => value <= eps,
        }
    }
}

impl std::str::FromStr for RangeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance-within" => Ok(Self::DistanceWithin),
            "ip-at-least" => Ok(Self::IpAtLeast),
            "ip-at-most" => Ok(Self::IpAtMost),
            _ => Err(Error::Parameter(format!("unknown range kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: usize,
    pub value: f64,
}

/// A range hit. `value` is `None` when the bounds alone decided membership
/// and the exact value was never computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeHit {
    pub id: usize,
    pub value: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Exact distance or inner-product evaluations against dataset points.
    pub exact_evals: u64,
    /// Candidates visited before the scan terminated.
    pub candidates_scanned: usize,
    pub bound_time: Duration,
    pub total_time: Duration,
    /// Set when more neighbors were requested than the dataset holds.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult<H> {
    pub hits: Vec<H>,
    pub stats: QueryStats,
}

/// An exact pivot-filtering index over an immutable dataset.
#[derive(Clone, Debug)]
pub struct PflsIndex {
    data: Arc<Dataset>,
    provider: Arc<InnerProduct>,
    frame: PivotFrame,
    k_requested: usize,
    seed: u64,
    center_spec: CenterSpec,
}

impl PartialEq for PflsIndex {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
            && self.provider == other.provider
            && self.frame == other.frame
            && self.k_requested == other.k_requested
            && self.seed == other.seed
            && self.center_spec == other.center_spec
    }
}

impl PflsIndex {
    /// Draws up to `k` pivots uniformly without replacement from a seeded
    /// permutation of the dataset. Candidates rejected as linearly dependent
    /// are replaced by the next unused one until `k` pivots are retained or
    /// the dataset is exhausted.
    pub fn build(
        data: impl Into<Arc<Dataset>>,
        provider: impl Into<Arc<InnerProduct>>,
        k: usize,
        center: &CenterSpec,
        seed: u64,
    ) -> Result<Self> {
        let data = data.into();
        let provider = provider.into();
        if k > data.n() {
            return Err(Error::Parameter(format!(
                "cannot draw {k} pivots from {} points",
                data.n()
            )));
        }
        if provider.is_dot() && k > data.d() {
            return Err(Error::Parameter(format!(
                "{k} pivots exceed the dimension {} of the dot-product space",
                data.d()
            )));
        }
        provider.validate(&data, seed)?;
        let resolved = Center::resolve(&data, center, &provider)?;

        let mut order: Vec<usize> = (0..data.n()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut builder = FrameBuilder::new(&data, resolved, &provider);
        for id in order {
            if builder.len() == k {
                break;
            }
            builder.offer(id)?;
        }
        let frame = builder.finish()?;
        if frame.k() < k {
            log::warn!(
                "only {} of {k} requested pivots are linearly independent",
                frame.k()
            );
        }
        Ok(Self {
            data,
            provider,
            frame,
            k_requested: k,
            seed,
            center_spec: center.clone(),
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn provider(&self) -> &InnerProduct {
        &self.provider
    }

    pub fn frame(&self) -> &PivotFrame {
        &self.frame
    }

    pub fn k_requested(&self) -> usize {
        self.k_requested
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn center_spec(&self) -> &CenterSpec {
        &self.center_spec
    }

    /// Projects a query onto the frame (`k + 2` inner products plus the
    /// center term).
    pub fn project(&self, q: PointRef<'_>) -> Result<Projection> {
        self.frame.project(&self.data, &self.provider, q)
    }

    /// Inflated inner-product bounds for one dataset point.
    #[inline]
    fn ip_interval(&self, x: usize, q: &Projection) -> (f64, f64) {
        let f = &self.frame;
        let mut px = f.point(x);
        let mut pq = q.as_ref();
        let sx = f.point_sqnorm_c(x).max(0.0);
        let sq = q.sqnorm_c.max(0.0);
        px.residual_sq += ROUNDING_SLACK * sx;
        pq.residual_sq += ROUNDING_SLACK * sq;
        let (mid, half) = ip_mid_half(f.center().cc(), px, pq);
        let slack = ROUNDING_SLACK
            * ((sx * sq).sqrt() + px.center_ip.abs() + pq.center_ip.abs() + f.center().cc().abs());
        (mid - half - slack, mid + half + slack)
    }

    #[inline]
    fn distance_interval(&self, x: usize, q: &Projection) -> (f64, f64) {
        let (lo, hi) = self.ip_interval(x, q);
        let base = self.frame.point_self_ip(x) + q.self_ip;
        (
            (base - 2.0 * hi).max(0.0).sqrt(),
            (base - 2.0 * lo).max(0.0).sqrt(),
        )
    }

    /// The bounds queries prune with, for every dataset point.
    pub fn bounds(&self, q: &Projection, kind: BoundKind) -> Vec<BoundsInterval> {
        (0..self.data.n())
            .map(|x| {
                let (lo, hi) = match kind {
                    BoundKind::InnerProduct => self.ip_interval(x, q),
                    BoundKind::Distance => self.distance_interval(x, q),
                    BoundKind::SquaredDistance => {
                        let (lo, hi) = self.distance_interval(x, q);
                        (lo * lo, hi * hi)
                    }
                };
                BoundsInterval { lo, hi, kind }
            })
            .collect()
    }

    /// One exact evaluation against dataset row `x`.
    #[inline]
    fn exact(&self, x: usize, q: PointRef<'_>, proj: &Projection, distance: bool) -> Result<f64> {
        if distance {
            let sq = self.provider.sq_distance_with_norms(
                &self.data,
                PointRef::Row(x),
                self.frame.point_self_ip(x),
                q,
                proj.self_ip,
            )?;
            Ok(sq.sqrt())
        } else {
            self.provider.ip(&self.data, PointRef::Row(x), q)
        }
    }

    /// The `n` best points under `kind`, ties broken towards smaller ids.
    pub fn knn(&self, q: PointRef<'_>, n: usize, kind: KnnKind) -> Result<QueryResult<Neighbor>> {
        if n == 0 {
            return Err(Error::Parameter("knn needs n >= 1".into()));
        }
        let start = Instant::now();
        let proj = self.project(q)?;
        let distance = kind.is_distance();

        // Pruning bound in "smaller is better" form.
        let mut order: Vec<(f64, usize)> = (0..self.data.n())
            .map(|x| {
                let bound = match kind {
                    KnnKind::SmallestDistance => self.distance_interval(x, &proj).0,
                    KnnKind::LargestDistance => -self.distance_interval(x, &proj).1,
                    KnnKind::SmallestIp => self.ip_interval(x, &proj).0,
                    KnnKind::LargestIp => -self.ip_interval(x, &proj).1,
                };
                (bound, x)
            })
            .collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let bound_time = start.elapsed();

        let mut stats = QueryStats {
            truncated: n > self.data.n(),
            ..QueryStats::default()
        };
        let mut heap: BinaryHeap<Entry> = BinaryHeap::with_capacity(n + 1);
        for (bound, x) in order {
            if heap.len() == n {
                let worst = *heap.peek().expect("heap is full");
                // Bounds are valid, so exact >= bound > worst for this and
                // every later candidate.
                if bound > worst.key {
                    break;
                }
                stats.candidates_scanned += 1;
                let key = kind.key(self.exact(x, q, &proj, distance)?);
                stats.exact_evals += 1;
                let entry = Entry { key, id: x };
                if entry < worst {
                    heap.pop();
                    heap.push(entry);
                }
            } else {
                stats.candidates_scanned += 1;
                let key = kind.key(self.exact(x, q, &proj, distance)?);
                stats.exact_evals += 1;
                heap.push(Entry { key, id: x });
            }
        }
        let hits = heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Neighbor {
                id: e.id,
                value: kind.key(e.key),
            })
            .collect();
        stats.bound_time = bound_time;
        stats.total_time = start.elapsed();
        Ok(QueryResult { hits, stats })
    }

    /// All points satisfying `kind` against `eps`, in id order.
    ///
    /// A point is accepted without an exact evaluation when its bound
    /// interval lies entirely inside the accepted region, and rejected
    /// without one when it lies entirely outside.
    pub fn range(
        &self,
        q: PointRef<'_>,
        eps: f64,
        kind: RangeKind,
    ) -> Result<QueryResult<RangeHit>> {
        if !eps.is_finite() || (kind == RangeKind::DistanceWithin && eps < 0.0) {
            return Err(Error::Parameter(format!("invalid range threshold {eps}")));
        }
        let start = Instant::now();
        let proj = self.project(q)?;
        let distance = kind == RangeKind::DistanceWithin;
        let mut stats = QueryStats::default();
        let mut bound_time = Duration::ZERO;
        let mut hits = Vec::new();
        for x in 0..self.data.n() {
            let t = Instant::now();
            let (lo, hi) = if distance {
                self.distance_interval(x, &proj)
            } else {
                self.ip_interval(x, &proj)
            };
            bound_time += t.elapsed();
            stats.candidates_scanned += 1;
            // (best possible, worst possible) under the predicate
            let (best, worst) = match kind {
                RangeKind::DistanceWithin | RangeKind::IpAtMost => (lo, hi),
                RangeKind::IpAtLeast => (hi, lo),
            };
            if !kind.accepts(best, eps) {
                continue;
            }
            if kind.accepts(worst, eps) {
                hits.push(RangeHit { id: x, value: None });
                continue;
            }
            let value = self.exact(x, q, &proj, distance)?;
            stats.exact_evals += 1;
            if kind.accepts(value, eps) {
                hits.push(RangeHit {
                    id: x,
                    value: Some(value),
                });
            }
        }
        stats.bound_time = bound_time;
        stats.total_time = start.elapsed();
        Ok(QueryResult { hits, stats })
    }

    /// Writes the versioned binary container documented in the README.
    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        serialize::write_index(self, w)
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        serialize::read_index(r)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Heap entry ordered by `(key, id)`; the max-heap top is the current worst.
#[derive(Clone, Copy, Debug)]
struct Entry {
    key: f64,
    id: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then(self.id.cmp(&other.id))
    }
}
