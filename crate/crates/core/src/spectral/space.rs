//! Centered, optionally normalized views of a dataset through its inner
//! products.

use nalgebra::{DMatrix, DVector};

use super::View;
use crate::dataspace::{CenterSpec, Dataset, InnerProduct, PointRef};
use crate::error::{Error, Result};

/// `<x_i - c, x_j - c>` over the rows kept in the view, where every row may
/// first be scaled to unit norm.
pub(crate) struct Space<'a> {
    data: &'a Dataset,
    provider: &'a InnerProduct,
    /// Dataset rows in the view.
    pub ids: Vec<usize>,
    scale: Vec<f64>,
    cterm: Vec<f64>,
    cc: f64,
    sqnorm: Vec<f64>,
}

impl<'a> Space<'a> {
    pub fn new(data: &'a Dataset, provider: &'a InnerProduct, view: &View) -> Result<Self> {
        let raw_self: Vec<f64> = (0..data.n())
            .map(|i| provider.eval(data, PointRef::Row(i), PointRef::Row(i)))
            .collect::<Result<_>>()?;
        let ids: Vec<usize> = if view.normalize {
            let kept: Vec<usize> = (0..data.n()).filter(|&i| raw_self[i] > 0.0).collect();
            if kept.len() < data.n() {
                log::warn!(
                    "{} zero-norm points excluded from normalization",
                    data.n() - kept.len()
                );
            }
            kept
        } else {
            (0..data.n()).collect()
        };
        if ids.is_empty() {
            return Err(Error::Empty);
        }
        let scale: Vec<f64> = ids
            .iter()
            .map(|&i| {
                if view.normalize {
                    raw_self[i].sqrt().recip()
                } else {
                    1.0
                }
            })
            .collect();
        let mut space = Self {
            data,
            provider,
            ids,
            scale,
            cterm: Vec::new(),
            cc: 0.0,
            sqnorm: Vec::new(),
        };
        let m = space.ids.len();
        let (cterm, cc) = match &view.center {
            CenterSpec::None => (vec![0.0; m], 0.0),
            CenterSpec::Point(p) => {
                data.check_index(*p)?;
                let sp = if view.normalize {
                    if raw_self[*p] <= 0.0 {
                        return Err(Error::Parameter(format!("center point {p} has zero norm")));
                    }
                    raw_self[*p].sqrt().recip()
                } else {
                    1.0
                };
                let terms = (0..m)
                    .map(|i| Ok(space.raw_row(*p, space.ids[i])? * sp * space.scale[i]))
                    .collect::<Result<Vec<_>>>()?;
                (terms, raw_self[*p] * sp * sp)
            }
            CenterSpec::Explicit(c) => {
                if provider.as_gram().is_some() {
                    return Err(Error::Unsupported(
                        "explicit center vectors need a vector provider".into(),
                    ));
                }
                let terms =
                    (0..m)
                        .map(|i| {
                            Ok(provider.eval(
                                data,
                                PointRef::Vector(c),
                                PointRef::Row(space.ids[i]),
                            )? * space.scale[i])
                        })
                        .collect::<Result<Vec<_>>>()?;
                let cc = provider.eval(data, PointRef::Vector(c), PointRef::Vector(c))?;
                (terms, cc)
            }
            CenterSpec::Mean if provider.is_dot() => {
                let mean = space.mean_vector();
                let terms = (0..m)
                    .map(|i| dot(&mean, data.row(space.ids[i])) * space.scale[i])
                    .collect();
                (terms, dot(&mean, &mean))
            }
            CenterSpec::Mean => {
                let mut terms = vec![0.0; m];
                for i in 0..m {
                    for j in 0..=i {
                        let v = space.scaled(i, j)?;
                        terms[i] += v;
                        if i != j {
                            terms[j] += v;
                        }
                    }
                }
                let inv = 1.0 / m as f64;
                terms.iter_mut().for_each(|t| *t *= inv);
                let cc = terms.iter().sum::<f64>() * inv;
                (terms, cc)
            }
        };
        space.cterm = cterm;
        space.cc = cc;
        space.sqnorm = (0..m)
            .map(|i| {
                raw_self[space.ids[i]] * space.scale[i] * space.scale[i] - 2.0 * space.cterm[i]
                    + space.cc
            })
            .collect();
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    fn raw_row(&self, a: usize, b: usize) -> Result<f64> {
        self.provider
            .eval(self.data, PointRef::Row(a), PointRef::Row(b))
    }

    fn scaled(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.raw_row(self.ids[i], self.ids[j])? * self.scale[i] * self.scale[j])
    }

    /// Centered inner product between view members `i` and `j`.
    #[inline]
    pub fn ip(&self, i: usize, j: usize) -> f64 {
        let raw = self
            .raw_row(self.ids[i], self.ids[j])
            .expect("view ids are valid rows");
        raw * self.scale[i] * self.scale[j] - self.cterm[i] - self.cterm[j] + self.cc
    }

    /// `|x_i - c|^2`
    #[inline]
    pub fn sqnorm(&self, i: usize) -> f64 {
        self.sqnorm[i]
    }

    /// Mean centered squared norm, i.e. the trace of the second-moment
    /// matrix about the center.
    pub fn total_var(&self) -> f64 {
        self.sqnorm.iter().sum::<f64>() / self.len() as f64
    }

    fn mean_vector(&self) -> Vec<f64> {
        let d = self.data.d();
        let mut mean = vec![0.0; d];
        for (i, &id) in self.ids.iter().enumerate() {
            for (m, v) in mean.iter_mut().zip(self.data.row(id)) {
                *m += v * self.scale[i];
            }
        }
        let inv = 1.0 / self.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    /// Centered, scaled coordinate vectors; dot provider only.
    pub fn vectors(&self, view: &View) -> Option<Vec<DVector<f64>>> {
        if !self.provider.is_dot() {
            return None;
        }
        let d = self.data.d();
        let c: Vec<f64> = match &view.center {
            CenterSpec::None => vec![0.0; d],
            CenterSpec::Mean => self.mean_vector(),
            CenterSpec::Point(p) => {
                let row = self.data.row(*p);
                let s = if view.normalize {
                    dot(row, row).sqrt().recip()
                } else {
                    1.0
                };
                row.iter().map(|v| v * s).collect()
            }
            CenterSpec::Explicit(v) => v.clone(),
        };
        Some(
            self.ids
                .iter()
                .zip(&self.scale)
                .map(|(&id, &s)| {
                    DVector::from_iterator(
                        d,
                        self.data.row(id).iter().zip(&c).map(|(x, c)| x * s - c),
                    )
                })
                .collect(),
        )
    }

    /// `(1/m) Σ v vᵀ` over the centered vectors; dot provider only.
    pub fn second_moment(&self, view: &View) -> Option<DMatrix<f64>> {
        let vectors = self.vectors(view)?;
        let d = self.data.d();
        let mut m = DMatrix::zeros(d, d);
        for v in &vectors {
            m.syger(1.0, v, v, 1.0);
        }
        m.fill_upper_triangle_with_lower_triangle();
        m /= vectors.len() as f64;
        Some(m)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
