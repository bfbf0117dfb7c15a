//! Exhaustive scans with the same result conventions as the index.

use super::{KnnKind, Neighbor, RangeHit, RangeKind};
use crate::dataspace::{Dataset, InnerProduct, PointRef};
use crate::error::Result;

fn value(
    data: &Dataset,
    provider: &InnerProduct,
    x: usize,
    q: PointRef<'_>,
    distance: bool,
) -> Result<f64> {
    if distance {
        Ok(provider.sq_distance(data, PointRef::Row(x), q)?.sqrt())
    } else {
        provider.ip(data, PointRef::Row(x), q)
    }
}

/// Top `n` under `kind`, ordered best first, ties towards smaller ids.
pub fn brute_force_knn(
    data: &Dataset,
    provider: &InnerProduct,
    q: PointRef<'_>,
    n: usize,
    kind: KnnKind,
) -> Result<Vec<Neighbor>> {
    let mut all = (0..data.n())
        .map(|x| {
            value(data, provider, x, q, kind.is_distance()).map(|value| Neighbor { id: x, value })
        })
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| {
        kind.key(a.value)
            .total_cmp(&kind.key(b.value))
            .then(a.id.cmp(&b.id))
    });
    all.truncate(n);
    Ok(all)
}

/// Every point satisfying the range predicate, in id order, with values.
pub fn brute_force_range(
    data: &Dataset,
    provider: &InnerProduct,
    q: PointRef<'_>,
    eps: f64,
    kind: RangeKind,
) -> Result<Vec<RangeHit>> {
    let distance = kind == RangeKind::DistanceWithin;
    let mut hits = Vec::new();
    for x in 0..data.n() {
        let v = value(data, provider, x, q, distance)?;
        if kind.accepts(v, eps) {
            hits.push(RangeHit {
                id: x,
                value: Some(v),
            });
        }
    }
    Ok(hits)
}
