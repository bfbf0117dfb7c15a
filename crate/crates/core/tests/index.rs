mod common;

use std::sync::atomic::Ordering;
use std::sync::Arc;

use common::*;
use pfls_core::dataspace::*;
use pfls_core::index::*;
use pfls_core::pivotframe::BoundKind;

fn assert_knn_eq(got: &[Neighbor], want: &[(usize, f64)], ctx: &str) {
    assert_eq!(got.len(), want.len(), "{ctx}");
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g.id, w.0, "{ctx}");
        assert!((g.value - w.1).abs() <= 1e-9 * w.1.abs().max(1.0), "{ctx}");
    }
}

fn assert_range_eq(got: &[RangeHit], want: &[(usize, f64)], ctx: &str) {
    let ids: Vec<usize> = got.iter().map(|h| h.id).collect();
    let want_ids: Vec<usize> = want.iter().map(|w| w.0).collect();
    assert_eq!(ids, want_ids, "{ctx}");
    for (g, w) in got.iter().zip(want) {
        if let Some(v) = g.value {
            assert!((v - w.1).abs() <= 1e-9 * w.1.abs().max(1.0), "{ctx}");
        }
    }
}

#[test]
fn knn_matches_coordinate_oracle() {
    let data = Arc::new(gaussian(2000, 16, 11));
    let queries = gaussian(50, 16, 12);
    for center in [CenterSpec::None, CenterSpec::Mean] {
        for k in [0, 4, 16] {
            let idx = PflsIndex::build(data.clone(), InnerProduct::dot(), k, &center, 5).unwrap();
            for (qi, q) in queries.rows().enumerate() {
                for kind in KnnKind::ALL {
                    let got = idx.knn(PointRef::Vector(q), 10, kind).unwrap();
                    let want = oracle_knn(&data, q, 10, kind);
                    assert_knn_eq(&got.hits, &want, &format!("{center} k={k} q={qi} {kind:?}"));
                    assert!(got.stats.exact_evals <= 2000);
                }
            }
        }
    }
}

#[test]
fn range_matches_oracle_at_median_distance() {
    let data = Arc::new(gaussian(2000, 16, 21));
    let eps = median_pairwise_distance(&data);
    let queries = gaussian(20, 16, 22);
    for k in [0, 8, 16] {
        let idx =
            PflsIndex::build(data.clone(), InnerProduct::dot(), k, &CenterSpec::None, 1).unwrap();
        for q in queries.rows() {
            let got = idx
                .range(PointRef::Vector(q), eps, RangeKind::DistanceWithin)
                .unwrap();
            let want = oracle_range(&data, q, eps, RangeKind::DistanceWithin);
            assert_range_eq(&got.hits, &want, &format!("k={k}"));
            for kind in [RangeKind::IpAtLeast, RangeKind::IpAtMost] {
                let got = idx.range(PointRef::Vector(q), 1.5, kind).unwrap();
                assert_range_eq(
                    &got.hits,
                    &oracle_range(&data, q, 1.5, kind),
                    &format!("k={k} {kind:?}"),
                );
            }
        }
    }
}

#[test]
fn full_rank_range_needs_no_exact_evaluations() {
    let data = Arc::new(gaussian(500, 8, 31));
    let idx = PflsIndex::build(data.clone(), InnerProduct::dot(), 8, &CenterSpec::None, 3).unwrap();
    assert_eq!(idx.frame().k(), 8);
    let queries = gaussian(30, 8, 32);
    for q in queries.rows() {
        let eps = 3.0;
        let got = idx
            .range(PointRef::Vector(q), eps, RangeKind::DistanceWithin)
            .unwrap();
        let borderline = data
            .rows()
            .filter(|r| (sq_dist(r, q).sqrt() - eps).abs() <= 1e-8)
            .count() as u64;
        assert!(got.stats.exact_evals <= borderline);
        assert_range_eq(
            &got.hits,
            &oracle_range(&data, q, eps, RangeKind::DistanceWithin),
            "full rank",
        );
    }
}

#[test]
fn instrumented_provider_sees_every_evaluation() {
    let data = Arc::new(gaussian(800, 6, 41));
    let queries = gaussian(10, 6, 42);
    for (center, overhead) in [(CenterSpec::None, 1), (CenterSpec::Mean, 2)] {
        let (provider, counter) = InnerProduct::dot().instrumented();
        let idx = PflsIndex::build(data.clone(), provider, 3, &center, 8).unwrap();
        for q in queries.rows() {
            for kind in RangeKind::ALL {
                counter.store(0, Ordering::SeqCst);
                let got = idx.range(PointRef::Vector(q), 2.0, kind).unwrap();
                let seen = counter.load(Ordering::SeqCst);
                // Projection: <q,q>, one per pivot, and <c,q> for a vector center.
                assert_eq!(
                    seen,
                    got.stats.exact_evals + 3 + overhead,
                    "{center} {kind:?}"
                );
            }
            counter.store(0, Ordering::SeqCst);
            let got = idx
                .knn(PointRef::Vector(q), 5, KnnKind::SmallestDistance)
                .unwrap();
            assert_eq!(
                counter.load(Ordering::SeqCst),
                got.stats.exact_evals + 3 + overhead
            );
        }
    }
}

#[test]
fn skipped_tail_could_not_improve_the_result() {
    let data = Arc::new(uniform_ball(1500, 5, 51));
    let idx = PflsIndex::build(data.clone(), InnerProduct::dot(), 4, &CenterSpec::Mean, 2).unwrap();
    let queries = uniform_ball(20, 5, 52);
    for q in queries.rows() {
        for kind in KnnKind::ALL {
            let res = idx.knn(PointRef::Vector(q), 7, kind).unwrap();
            let proj = idx.project(PointRef::Vector(q)).unwrap();
            let bk = if kind.is_distance() {
                BoundKind::Distance
            } else {
                BoundKind::InnerProduct
            };
            let bounds = idx.bounds(&proj, bk);
            let key = |v: f64| {
                if matches!(kind, KnnKind::LargestDistance | KnnKind::LargestIp) {
                    -v
                } else {
                    v
                }
            };
            let mut order: Vec<(f64, usize)> = bounds
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let prune = match kind {
                        KnnKind::SmallestDistance | KnnKind::SmallestIp => b.lo,
                        KnnKind::LargestDistance | KnnKind::LargestIp => -b.hi,
                    };
                    (prune, i)
                })
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let worst = res.hits.last().unwrap();
            let worst_key = (key(worst.value), worst.id);
            let distance = kind.is_distance();
            for &(_, x) in &order[res.stats.candidates_scanned..] {
                let v = coord_value(data.row(x), q, distance);
                let kx = (key(v), x);
                assert!(
                    kx.0 > worst_key.0 || (kx.0 == worst_key.0 && kx.1 > worst_key.1),
                    "skipped point {x} would have entered"
                );
            }
        }
    }
}

#[test]
fn pruning_improves_with_more_pivots() {
    let data = Arc::new(gaussian(4000, 8, 61));
    let queries = gaussian(60, 8, 62);
    let mut prev = f64::INFINITY;
    for k in 0..=8 {
        let idx =
            PflsIndex::build(data.clone(), InnerProduct::dot(), k, &CenterSpec::None, 9).unwrap();
        let mean = queries
            .rows()
            .map(|q| {
                idx.knn(PointRef::Vector(q), 10, KnnKind::SmallestDistance)
                    .unwrap()
                    .stats
                    .exact_evals as f64
            })
            .sum::<f64>()
            / 60.0;
        assert!(mean <= prev * 1.05, "k={k}: {mean} after {prev}");
        prev = mean;
    }
    assert!(prev < 100.0);
}

#[test]
fn kernel_and_gram_indexes_agree_with_brute_force() {
    let data = Arc::new(gaussian(300, 4, 71));
    let kernel = Kernel::Rbf { gamma: 0.2 };
    let provider = InnerProduct::kernel(kernel.clone()).unwrap();
    let gram = InnerProduct::gram(GramMatrix::from_kernel(&data, &kernel));
    let queries = gaussian(10, 4, 72);
    for center in [CenterSpec::None, CenterSpec::Mean, CenterSpec::Point(7)] {
        let a = PflsIndex::build(data.clone(), provider.clone(), 12, &center, 4).unwrap();
        let b = PflsIndex::build(data.clone(), gram.clone(), 12, &center, 4).unwrap();
        assert_eq!(a.frame().pivot_ids(), b.frame().pivot_ids());
        for q in queries.rows() {
            let column = GramColumn {
                values: data.rows().map(|r| (-0.2 * sq_dist(r, q)).exp()).collect(),
                self_ip: 1.0,
            };
            for kind in KnnKind::ALL {
                let want = brute_force_knn(&data, &provider, PointRef::Vector(q), 8, kind).unwrap();
                let got = a.knn(PointRef::Vector(q), 8, kind).unwrap().hits;
                let got_gram = b.knn(PointRef::Column(&column), 8, kind).unwrap().hits;
                for (g, w) in got.iter().zip(&want).chain(got_gram.iter().zip(&want)) {
                    assert_eq!(g.id, w.id, "{center} {kind:?}");
                    assert!((g.value - w.value).abs() < 1e-9);
                }
            }
            for kind in RangeKind::ALL {
                let eps = if kind == RangeKind::DistanceWithin {
                    1.1
                } else {
                    0.4
                };
                let want =
                    brute_force_range(&data, &provider, PointRef::Vector(q), eps, kind).unwrap();
                let ids = |h: &[RangeHit]| h.iter().map(|h| h.id).collect::<Vec<_>>();
                assert_eq!(
                    ids(&a.range(PointRef::Vector(q), eps, kind).unwrap().hits),
                    ids(&want)
                );
                assert_eq!(
                    ids(&b.range(PointRef::Column(&column), eps, kind).unwrap().hits),
                    ids(&want)
                );
            }
        }
    }
}

#[test]
fn hand_sized_examples() {
    let data = Arc::new(Dataset::from_rows(&[[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]]).unwrap());
    let idx = PflsIndex::build(data.clone(), InnerProduct::dot(), 1, &CenterSpec::None, 0).unwrap();
    let q = [0.4, 0.0];
    let hits = idx
        .knn(PointRef::Vector(&q), 1, KnnKind::SmallestDistance)
        .unwrap()
        .hits;
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].id, 0);
    assert!((hits[0].value - 0.4).abs() < 1e-15);

    let all = idx
        .knn(PointRef::Vector(&q), 5, KnnKind::SmallestDistance)
        .unwrap();
    assert!(all.stats.truncated);
    assert_eq!(
        all.hits.iter().map(|h| h.id).collect::<Vec<_>>(),
        vec![0, 1, 2]
    );

    let empty = idx
        .range(PointRef::Vector(&q), 0.0, RangeKind::DistanceWithin)
        .unwrap();
    assert!(empty.hits.is_empty());
    let self_hit = idx
        .range(PointRef::Row(1), 0.0, RangeKind::DistanceWithin)
        .unwrap();
    assert!(self_hit.hits.is_empty());
}

#[test]
fn ties_go_to_the_smaller_id() {
    let data = Arc::new(
        Dataset::from_rows(&[[1.0, 1.0], [3.0, 0.0], [1.0, 1.0], [0.0, 3.0], [1.0, 1.0]]).unwrap(),
    );
    for k in 0..=2 {
        let idx =
            PflsIndex::build(data.clone(), InnerProduct::dot(), k, &CenterSpec::None, 3).unwrap();
        let hits = idx
            .knn(PointRef::Vector(&[1.0, 1.0]), 2, KnnKind::SmallestDistance)
            .unwrap()
            .hits;
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), vec![0, 2]);
        let hits = idx
            .knn(PointRef::Vector(&[1.0, 1.0]), 2, KnnKind::LargestDistance)
            .unwrap()
            .hits;
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), vec![1, 3]);
    }
}

#[test]
fn rank_one_data_keeps_one_pivot() {
    let data = Dataset::from_rows(&[[1.0, 2.0], [2.0, 4.0], [-3.0, -6.0]]).unwrap();
    let idx = PflsIndex::build(data, InnerProduct::dot(), 2, &CenterSpec::None, 0).unwrap();
    assert_eq!(idx.frame().k(), 1);
    assert_eq!(idx.k_requested(), 2);
}

#[test]
fn builds_are_deterministic_and_survive_files() {
    let data = Arc::new(gaussian(300, 6, 81));
    let a = PflsIndex::build(data.clone(), InnerProduct::dot(), 4, &CenterSpec::Mean, 17).unwrap();
    let b = PflsIndex::build(data.clone(), InnerProduct::dot(), 4, &CenterSpec::Mean, 17).unwrap();
    assert_eq!(a.frame().pivot_ids(), b.frame().pivot_ids());
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.idx"), dir.path().join("b.idx"));
    a.save(&pa).unwrap();
    b.save(&pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    let back = PflsIndex::load(&pa).unwrap();
    assert_eq!(back, a);
    let q = [0.1, 0.2, -0.3, 1.0, 0.0, 0.5];
    let r1 = a.knn(PointRef::Vector(&q), 5, KnnKind::LargestIp).unwrap();
    let r2 = back
        .knn(PointRef::Vector(&q), 5, KnnKind::LargestIp)
        .unwrap();
    assert_eq!(r1.hits, r2.hits);
    assert_eq!(r1.stats.exact_evals, r2.stats.exact_evals);
}

#[test]
fn parameter_errors() {
    let data = Arc::new(gaussian(5, 3, 0));
    assert!(PflsIndex::build(data.clone(), InnerProduct::dot(), 6, &CenterSpec::None, 0).is_err());
    assert!(PflsIndex::build(data.clone(), InnerProduct::dot(), 4, &CenterSpec::None, 0).is_err());
    let idx = PflsIndex::build(data, InnerProduct::dot(), 2, &CenterSpec::None, 0).unwrap();
    assert!(idx
        .knn(PointRef::Vector(&[0.0; 3]), 0, KnnKind::SmallestIp)
        .is_err());
    assert!(idx
        .knn(PointRef::Vector(&[0.0; 2]), 1, KnnKind::SmallestIp)
        .is_err());
    assert!(idx
        .range(PointRef::Vector(&[0.0; 3]), -1.0, RangeKind::DistanceWithin)
        .is_err());
}

#[test]
fn shared_index_answers_from_many_threads() {
    fn send_sync<T: Send + Sync>() {}
    send_sync::<PflsIndex>();
    let data = Arc::new(gaussian(500, 4, 90));
    let idx = Arc::new(
        PflsIndex::build(data.clone(), InnerProduct::dot(), 3, &CenterSpec::None, 1).unwrap(),
    );
    let handles: Vec<_> = (0..4)
        .map(|t| {
            let idx = idx.clone();
            std::thread::spawn(move || {
                idx.knn(PointRef::Row(t * 7), 1, KnnKind::SmallestDistance)
                    .unwrap()
            })
        })
        .collect();
    for (t, h) in handles.into_iter().enumerate() {
        let r = h.join().unwrap();
        assert_eq!(r.hits[0].id, t * 7);
        assert_eq!(r.hits[0].value, 0.0);
    }
}
