use serde::{Deserialize, Serialize};

use super::{Dataset, InnerProduct, PointRef};
use crate::error::{Error, Result};

/// Where the affine projections are anchored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterSpec {
    /// `c = 0`, the non-affine case.
    #[default]
    None,
    Mean,
    Point(usize),
    Explicit(Vec<f64>),
}

impl std::str::FromStr for CenterSpec {
    type Err = Error;

    /// Parses `none`, `mean` or `point:I`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "mean" => Ok(Self::Mean),
            _ => s
                .strip_prefix("point:")
                .and_then(|i| i.parse().ok())
                .map(Self::Point)
                .ok_or_else(|| Error::Parameter(format!("invalid center spec '{s}'"))),
        }
    }
}

impl std::fmt::Display for CenterSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Mean => write!(f, "mean"),
            Self::Point(i) => write!(f, "point:{i}"),
            Self::Explicit(v) => write!(f, "explicit({} dims)", v.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Zero,
    Vector(Vec<f64>),
    Row(usize),
    /// Feature-space mean, known only through averaged inner products.
    Averaged,
}

/// A resolved center `c`, exposing `<c, c>` and `<c, x>`.
///
/// `<c, x>` for dataset rows is a table lookup; for queries it costs one
/// evaluation (vector and row centers) or `n` evaluations (kernel-space
/// mean).
#[derive(Clone, Debug, PartialEq)]
pub struct Center {
    spec: CenterSpec,
    repr: Repr,
    cc: f64,
    row_terms: Vec<f64>,
}

impl Center {
    pub fn resolve(data: &Dataset, spec: &CenterSpec, provider: &InnerProduct) -> Result<Self> {
        let n = data.n();
        let (repr, row_terms, cc) = match spec {
            CenterSpec::None => (Repr::Zero, vec![0.0; n], 0.0),
            CenterSpec::Point(i) => {
                data.check_index(*i)?;
                let terms = (0..n)
                    .map(|j| provider.ip(data, PointRef::Row(*i), PointRef::Row(j)))
                    .collect::<Result<Vec<_>>>()?;
                let cc = terms[*i];
                (Repr::Row(*i), terms, cc)
            }
            CenterSpec::Explicit(v) => {
                if provider.as_gram().is_some() {
                    return Err(Error::Unsupported(
                        "explicit center vectors need a vector provider".into(),
                    ));
                }
                vector_center(data, provider, v.clone())?
            }
            CenterSpec::Mean if provider.is_dot() => vector_center(data, provider, data.mean())?,
            CenterSpec::Mean => {
                let mut terms = vec![0.0; n];
                for i in 0..n {
                    for j in 0..=i {
                        let v = provider.ip(data, PointRef::Row(i), PointRef::Row(j))?;
                        terms[i] += v;
                        if i != j {
                            terms[j] += v;
                        }
                    }
                }
                let inv = 1.0 / n as f64;
                terms.iter_mut().for_each(|t| *t *= inv);
                let cc = terms.iter().sum::<f64>() * inv;
                (Repr::Averaged, terms, cc)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            repr,
            cc,
            row_terms,
        })
    }

    /// The zero center, for any dataset size.
    pub fn zero(n: usize) -> Self {
        Self {
            spec: CenterSpec::None,
            repr: Repr::Zero,
            cc: 0.0,
            row_terms: vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &CenterSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.repr == Repr::Zero
    }

    /// `<c, c>`
    #[inline]
    pub fn cc(&self) -> f64 {
        self.cc
    }

    /// `<c, x_i>` for dataset row `i`.
    #[inline]
    pub fn with_row(&self, i: usize) -> f64 {
        self.row_terms[i]
    }

    pub fn row_terms(&self) -> &[f64] {
        &self.row_terms
    }

    /// The explicit center vector, when there is one.
    pub fn vector(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Vector(v) => Some(v),
            _ => None,
        }
    }

    /// `<c, q>` for any point reference.
    pub fn with(&self, data: &Dataset, provider: &InnerProduct, q: PointRef<'_>) -> Result<f64> {
        if let PointRef::Row(i) = q {
            data.check_index(i)?;
            return Ok(self.row_terms[i]);
        }
        match &self.repr {
            Repr::Zero => Ok(0.0),
            Repr::Vector(c) => provider.ip(data, PointRef::Vector(c), q),
            Repr::Row(i) => provider.ip(data, PointRef::Row(*i), q),
            Repr::Averaged => {
                let mut sum = 0.0;
                for j in 0..data.n() {
                    sum += provider.ip(data, PointRef::Row(j), q)?;
                }
                Ok(sum / data.n() as f64)
            }
        }
    }

    /// `<x_i - c, x_i - c>` given `<x_i, x_i>`.
    #[inline]
    pub fn centered_sqnorm(&self, self_ip: f64, center_ip: f64) -> f64 {
        self_ip - 2.0 * center_ip + self.cc
    }

    pub(crate) fn parts(&self) -> (Option<&[f64]>, Option<usize>, bool) {
        match &self.repr {
            Repr::Zero => (None, None, false),
            Repr::Vector(v) => (Some(v), None, false),
            Repr::Row(i) => (None, Some(*i), false),
            Repr::Averaged => (None, None, true),
        }
    }

    pub(crate) fn from_parts(
        spec: CenterSpec,
        vector: Option<Vec<f64>>,
        row: Option<usize>,
        averaged: bool,
        cc: f64,
        row_terms: Vec<f64>,
    ) -> Self {
        let repr = match (vector, row, averaged) {
            (Some(v), _, _) => Repr::Vector(v),
            (None, Some(i), _) => Repr::Row(i),
            (None, None, true) => Repr::Averaged,
            (None, None, false) => Repr::Zero,
        };
        Self {
            spec,
            repr,
            cc,
            row_terms,
        }
    }
}

fn vector_center(
    data: &Dataset,
    provider: &InnerProduct,
    c: Vec<f64>,
) -> Result<(Repr, Vec<f64>, f64)> {
    if c.len() != data.d() {
        return Err(Error::Dimension {
            expected: data.d(),
            got: c.len(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("center vector must be finite".into()));
    }
    let terms = (0..data.n())
        .map(|j| provider.ip(data, PointRef::Vector(&c), PointRef::Row(j)))
        .collect::<Result<Vec<_>>>()?;
    let cc = provider.ip(data, PointRef::Vector(&c), PointRef::Vector(&c))?;
    Ok((Repr::Vector(c), terms, cc))
}
