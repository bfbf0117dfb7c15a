use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Number of random pairs checked by [`InnerProduct::validate`].
const SYMMETRY_SAMPLES: usize = 100;
const SYMMETRY_TOL: f64 = 1e-12;

/// Kernels evaluated on coordinate vectors.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    Dot,
    /// `exp(-gamma * |a - b|^2)`
    Rbf {
        gamma: f64,
    },
    /// `(<a, b> + offset)^degree`
    Polynomial {
        degree: u32,
        offset: f64,
    },
}

impl Kernel {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Dot => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * sq_euclidean(a, b)).exp(),
            Kernel::Polynomial { degree, offset } => (dot(a, b) + offset).powi(degree as i32),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Dot => write!(f, "dot"),
            Kernel::Rbf { gamma } => write!(f, "rbf:{gamma}"),
            Kernel::Polynomial { degree, offset } => write!(f, "poly:{degree},{offset}"),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    /// Parses `dot`, `rbf:GAMMA` or `poly:DEGREE,OFFSET`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("invalid kernel spec '{s}'"));
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let kernel = match name {
            "dot" if args.is_empty() => Kernel::Dot,
            "rbf" => Kernel::Rbf {
                gamma: args.parse().map_err(|_| bad())?,
            },
            "poly" => {
                let (deg, off) = args.split_once(',').ok_or_else(bad)?;
                Kernel::Polynomial {
                    degree: deg.parse().map_err(|_| bad())?,
                    offset: off.parse().map_err(|_| bad())?,
                }
            }
            _ => return Err(bad()),
        };
        kernel.check()?;
        Ok(kernel)
    }
}

impl Kernel {
    fn check(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(Error::Parameter(
                format!("rbf gamma must be positive, got {gamma}"),
            )),
            Kernel::Polynomial { degree: 0, .. } => Err(Error::Parameter(
                "polynomial degree must be positive".into(),
            )),
            Kernel::Polynomial { offset, .. } if !(offset >= 0.0 && offset.is_finite()) => {
                Err(Error::Parameter(format!(
                    "polynomial offset must be nonnegative, got {offset}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A precomputed, symmetric `n x n` Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
}

impl GramMatrix {
    /// Validates full symmetry and a nonnegative diagonal.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        if values.len() != n * n {
            return Err(Error::Format(format!(
                "gram matrix needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            let diag = values[i * n + i];
            if !(diag >= 0.0) {
                return Err(Error::Parameter(format!(
                    "gram diagonal entry {i} is {diag}"
                )));
            }
            for j in 0..i {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !a.is_finite() || a != b {
                    return Err(Error::Parameter(format!(
                        "gram matrix not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    /// Gram matrix of a dataset under a vector kernel.
    pub fn from_kernel(data: &Dataset, kernel: &Kernel) -> Self {
        let n = data.n();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(data.row(i), data.row(j));
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }
}

/// Inner products of an out-of-sample query against a Gram-matrix dataset:
/// `values[j] = <q, x_j>` and `self_ip = <q, q>`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramColumn {
    pub values: Vec<f64>,
    pub self_ip: f64,
}

/// Something an inner product can be taken with.
#[derive(Clone, Copy, Debug)]
pub enum PointRef<'a> {
    /// Row of the dataset the provider is used with.
    Row(usize),
    /// Explicit coordinates; not available for Gram providers.
    Vector(&'a [f64]),
    /// Query column for Gram providers.
    Column(&'a GramColumn),
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Kernel(Kernel),
    Gram(GramMatrix),
}

/// Supplies `<a, b>` for dataset rows and queries.
///
/// Every call through [`InnerProduct::ip`] or [`InnerProduct::sq_distance`]
/// counts as one evaluation on an instrumented provider.
#[derive(Clone, Debug)]
pub struct InnerProduct {
    kind: Kind,
    counter: Option<Arc<AtomicU64>>,
}

impl PartialEq for InnerProduct {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl InnerProduct {
    pub fn dot() -> Self {
        Self::kernel(Kernel::Dot).expect("dot kernel is always valid")
    }

    pub fn kernel(kernel: Kernel) -> Result<Self> {
        kernel.check()?;
        Ok(Self {
            kind: Kind::Kernel(kernel),
            counter: None,
        })
    }

    pub fn gram(matrix: GramMatrix) -> Self {
        Self {
            kind: Kind::Gram(matrix),
            counter: None,
        }
    }

    /// Returns a copy that counts evaluations into the returned counter.
    pub fn instrumented(&self) -> (Self, Arc<AtomicU64>) {
        let counter = Arc::new(AtomicU64::new(0));
        let provider = Self {
            kind: self.kind.clone(),
            counter: Some(Arc::clone(&counter)),
        };
        (provider, counter)
    }

    pub fn as_kernel(&self) -> Option<&Kernel> {
        match &self.kind {
            Kind::Kernel(k) => Some(k),
            Kind::Gram(_) => None,
        }
    }

    pub fn as_gram(&self) -> Option<&GramMatrix> {
        match &self.kind {
            Kind::Gram(g) => Some(g),
            Kind::Kernel(_) => None,
        }
    }

    pub fn is_dot(&self) -> bool {
        matches!(self.kind, Kind::Kernel(Kernel::Dot))
    }

    /// Checks that the provider fits the dataset, then samples random pairs for
    /// symmetry and nonnegative self inner products.
    pub fn validate(&self, data: &Dataset, seed: u64) -> Result<()> {
        if let Kind::Gram(g) = &self.kind {
            if g.n() != data.n() {
                return Err(Error::Dimension {
                    expected: data.n(),
                    got: g.n(),
                });
            }
            // Fully validated on construction.
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..SYMMETRY_SAMPLES {
            let i = rng.random_range(0..data.n());
            let j = rng.random_range(0..data.n());
            let ab = self.eval(data, PointRef::Row(i), PointRef::Row(j))?;
            let ba = self.eval(data, PointRef::Row(j), PointRef::Row(i))?;
            if (ab - ba).abs() > SYMMETRY_TOL * ab.abs().max(ba.abs()).max(1.0) {
                return Err(Error::Parameter(format!(
                    "inner product not symmetric on rows ({i}, {j}): {ab} vs {ba}"
                )));
            }
            let aa = self.eval(data, PointRef::Row(i), PointRef::Row(i))?;
            if aa < 0.0 {
                return Err(Error::Parameter(format!("<x, x> = {aa} < 0 for row {i}")));
            }
        }
        Ok(())
    }

    /// Checks that a query reference is usable with this provider.
    pub fn check_ref(&self, data: &Dataset, p: PointRef<'_>) -> Result<()> {
        match (&self.kind, p) {
            (_, PointRef::Row(i)) => data.check_index(i),
            (Kind::Kernel(_), PointRef::Vector(v)) => check_dim(data, v),
            (Kind::Gram(g), PointRef::Column(c)) => {
                if c.values.len() == g.n() {
                    Ok(())
                } else {
                    Err(Error::Dimension {
                        expected: g.n(),
                        got: c.values.len(),
                    })
                }
            }
            (Kind::Kernel(_), PointRef::Column(_)) => Err(Error::Unsupported(
                "gram columns require a gram-matrix provider".into(),
            )),
            (Kind::Gram(_), PointRef::Vector(_)) => Err(Error::Unsupported(
                "gram-matrix provider cannot evaluate explicit vectors".into(),
            )),
        }
    }

    /// `<a, b>` under this provider.
    pub fn ip(&self, data: &Dataset, a: PointRef<'_>, b: PointRef<'_>) -> Result<f64> {
        self.tick();
        self.eval(data, a, b)
    }

    /// `|a - b|^2` in the space induced by the provider.
    ///
    /// The dot provider evaluates coordinate differences directly; all other
    /// kinds go through `<a,a> + <b,b> - 2<a,b>`.
    pub fn sq_distance(&self, data: &Dataset, a: PointRef<'_>, b: PointRef<'_>) -> Result<f64> {
        self.tick();
        if let (Kind::Kernel(Kernel::Dot), Some(x), Some(y)) =
            (&self.kind, resolve(data, a)?, resolve(data, b)?)
        {
            return Ok(sq_euclidean(x, y));
        }
        let aa = self.eval(data, a, a)?;
        let bb = self.eval(data, b, b)?;
        let ab = self.eval(data, a, b)?;
        Ok((aa + bb - 2.0 * ab).max(0.0))
    }

    /// `|a - b|^2` given both self inner products, at the cost of one
    /// evaluation.
    pub fn sq_distance_with_norms(
        &self,
        data: &Dataset,
        a: PointRef<'_>,
        aa: f64,
        b: PointRef<'_>,
        bb: f64,
    ) -> Result<f64> {
        self.tick();
        if let (Kind::Kernel(Kernel::Dot), Some(x), Some(y)) =
            (&self.kind, resolve(data, a)?, resolve(data, b)?)
        {
            return Ok(sq_euclidean(x, y));
        }
        let ab = self.eval(data, a, b)?;
        Ok((aa + bb - 2.0 * ab).max(0.0))
    }

    #[inline]
    fn tick(&self) {
        if let Some(c) = &self.counter {
            c.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Uncounted evaluation.
    pub(crate) fn eval(&self, data: &Dataset, a: PointRef<'_>, b: PointRef<'_>) -> Result<f64> {
        match &self.kind {
            Kind::Kernel(k) => {
                let x = resolve(data, a)?.ok_or_else(column_on_kernel)?;
                let y = resolve(data, b)?.ok_or_else(column_on_kernel)?;
                Ok(k.eval(x, y))
            }
            Kind::Gram(g) => match (a, b) {
                (PointRef::Row(i), PointRef::Row(j)) => {
                    check_gram_index(g, i)?;
                    check_gram_index(g, j)?;
                    Ok(g.get(i, j))
                }
                (PointRef::Row(i), PointRef::Column(c))
                | (PointRef::Column(c), PointRef::Row(i)) => {
                    check_gram_index(g, i)?;
                    c.values.get(i).copied().ok_or(Error::Dimension {
                        expected: g.n(),
                        got: c.values.len(),
                    })
                }
                (PointRef::Column(c1), PointRef::Column(c2)) if std::ptr::eq(c1, c2) => {
                    Ok(c1.self_ip)
                }
                _ => Err(Error::Unsupported(
                    "gram-matrix provider only evaluates rows against rows or one query column"
                        .into(),
                )),
            },
        }
    }
}

fn column_on_kernel() -> Error {
    Error::Unsupported("gram columns require a gram-matrix provider".into())
}

fn check_gram_index(g: &GramMatrix, i: usize) -> Result<()> {
    if i < g.n() {
        Ok(())
    } else {
        Err(Error::OutOfRange { index: i, n: g.n() })
    }
}

fn check_dim(data: &Dataset, v: &[f64]) -> Result<()> {
    if v.len() == data.d() {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected: data.d(),
            got: v.len(),
        })
    }
}

fn resolve<'a>(data: &'a Dataset, p: PointRef<'a>) -> Result<Option<&'a [f64]>> {
    match p {
        PointRef::Row(i) => {
            data.check_index(i)?;
            Ok(Some(data.row(i)))
        }
        PointRef::Vector(v) => {
            check_dim(data, v)?;
            Ok(Some(v))
        }
        PointRef::Column(_) => Ok(None),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
