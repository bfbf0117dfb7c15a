mod common;

use common::{dot, gaussian};
use pfls_core::dataspace::*;
use pfls_core::Error;

#[test]
fn mean_center_matches_explicit_mean_vector() {
    let data = gaussian(10, 4, 3);
    let mean: Vec<f64> = (0..4)
        .map(|j| data.rows().map(|r| r[j]).sum::<f64>() / 10.0)
        .collect();
    let c = Center::resolve(&data, &CenterSpec::Mean, &InnerProduct::dot()).unwrap();
    assert!((c.cc() - dot(&mean, &mean)).abs() <= 1e-12 * dot(&mean, &mean).max(1.0));
    for (i, r) in data.rows().enumerate() {
        let want = dot(&mean, r);
        assert!((c.with_row(i) - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn kernel_space_mean_agrees_with_vector_mean() {
    // A degree-1 polynomial kernel without offset is the dot product, but it
    // takes the averaged-inner-product path.
    let data = gaussian(30, 5, 8);
    let linear = InnerProduct::kernel(Kernel::Polynomial {
        degree: 1,
        offset: 0.0,
    })
    .unwrap();
    let a = Center::resolve(&data, &CenterSpec::Mean, &linear).unwrap();
    let b = Center::resolve(&data, &CenterSpec::Mean, &InnerProduct::dot()).unwrap();
    assert!(a.vector().is_none());
    assert!(b.vector().is_some());
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
    assert!(rel(a.cc(), b.cc()) < 1e-10);
    for i in 0..30 {
        assert!(rel(a.with_row(i), b.with_row(i)) < 1e-10);
    }
    let q = [0.3, -1.0, 2.0, 0.5, 0.0];
    let qa = a.with(&data, &linear, PointRef::Vector(&q)).unwrap();
    let qb = b
        .with(&data, &InnerProduct::dot(), PointRef::Vector(&q))
        .unwrap();
    assert!(rel(qa, qb) < 1e-10);
}

#[test]
fn gram_and_dot_agree_on_rows() {
    let data = gaussian(25, 6, 1);
    let gram = InnerProduct::gram(GramMatrix::from_kernel(&data, &Kernel::Dot));
    let dotp = InnerProduct::dot();
    for i in 0..25 {
        for j in 0..25 {
            let a = gram.ip(&data, PointRef::Row(i), PointRef::Row(j)).unwrap();
            let b = dotp.ip(&data, PointRef::Row(i), PointRef::Row(j)).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let want = dot(data.row(i), data.row(j));
            assert!((b - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn provider_examples() {
    let data = Dataset::from_rows(&[[1.0, 2.0], [3.0, 4.0], [7.0, -1.0], [1.0, 0.0]]).unwrap();
    let v = |p: &InnerProduct, a, b| p.ip(&data, PointRef::Row(a), PointRef::Row(b)).unwrap();
    assert_eq!(v(&InnerProduct::dot(), 0, 1), 11.0);
    let rbf = InnerProduct::kernel(Kernel::Rbf { gamma: 0.5 }).unwrap();
    assert_eq!(v(&rbf, 2, 2), 1.0);
    let poly = InnerProduct::kernel(Kernel::Polynomial {
        degree: 2,
        offset: 1.0,
    })
    .unwrap();
    assert_eq!(v(&poly, 3, 3), 4.0);
}

#[test]
fn gram_rejects_vector_queries() {
    let data = gaussian(4, 2, 0);
    let gram = InnerProduct::gram(GramMatrix::from_kernel(&data, &Kernel::Dot));
    let q = [1.0, 1.0];
    assert!(matches!(
        gram.ip(&data, PointRef::Vector(&q), PointRef::Vector(&q)),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gaussian(3, 4, 5);
    for (name, fmt) in [("d.csv", Format::Csv), ("d.bin", Format::PflsBin)] {
        let path = dir.path().join(name);
        data.save(&path, fmt).unwrap();
        let back = Dataset::load(&path, fmt).unwrap();
        assert_eq!(back, data);
    }
    let bin = std::fs::read(dir.path().join("d.bin")).unwrap();
    assert_eq!(bin.len(), 4 + 4 + 8 + 8 + 12 * 8);
}

#[test]
fn csv_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "1,2\n3\n").unwrap();
    match Dataset::load(&path, Format::Csv) {
        Err(Error::RaggedRow { row, .. }) => assert_eq!(row, 2),
        other => panic!("unexpected {other:?}"),
    }
    std::fs::write(&path, "").unwrap();
    assert!(matches!(
        Dataset::load(&path, Format::Csv),
        Err(Error::Empty)
    ));
}
