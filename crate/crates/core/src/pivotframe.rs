//! Gram–Schmidt over pivots, expressed purely through inner products.
//!
//! A [`PivotFrame`] never materializes the orthonormal directions `r̂_i`.
//! It keeps the triangular table `T[i][j] = <r_i - c, r̂_j>` and the
//! residual norms `D_i` of each pivot, which is all the recursion
//!
//! ```text
//! <x - c, r̂_i> = (<x, r_i> - <c, x> - <c, r_i> + <c, c>
//!                 - Σ_{j<i} <x - c, r̂_j> T[i][j]) / D_i
//! ```
//!
//! needs. Coefficients of every dataset point are computed once when the
//! frame is built, so bounding `<x, q>` for a new query costs `k` inner
//! products plus `O(k^2)` for the query and `O(k)` per dataset point.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataspace::{Center, Dataset, InnerProduct, PointRef};
use crate::error::{Error, Result};

/// Relative residual below which a pivot counts as linearly dependent on
/// the ones before it: `D_i^2 <= DEPENDENCE_THRESHOLD * |r_i - c|^2`.
pub const DEPENDENCE_THRESHOLD: f64 = 1e-10;

/// A candidate rejected during orthogonalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub id: usize,
    /// `D^2 / |r - c|^2`, or `0` for a candidate equal to the center.
    pub relative_residual: f64,
}

/// Orthogonalized pivot state plus precomputed coefficients of every
/// dataset point.
#[derive(Clone, Debug, PartialEq)]
pub struct PivotFrame {
    pub(crate) pivot_ids: Vec<usize>,
    pub(crate) center: Center,
    /// Packed lower triangle; row `i` holds `T[i][0..i]`.
    pub(crate) tri: Vec<f64>,
    pub(crate) denoms: Vec<f64>,
    pub(crate) n: usize,
    /// Row-major `n x k`.
    pub(crate) point_coeffs: Vec<f64>,
    pub(crate) point_res: Vec<f64>,
    pub(crate) point_sqnorm_c: Vec<f64>,
    pub(crate) point_self_ip: Vec<f64>,
    pub(crate) discarded: Vec<Discard>,
}

/// Coefficients of a single point against a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `<q - c, r̂_i>` for each retained pivot.
    pub coeffs: Vec<f64>,
    /// `max(0, |q - c|^2 - Σ coeffs^2)`.
    pub residual_sq: f64,
    /// `<q - c, q - c>`
    pub sqnorm_c: f64,
    /// `<q, q>`
    pub self_ip: f64,
    /// `<c, q>`
    pub center_ip: f64,
}

impl Projection {
    pub fn as_ref(&self) -> Projected<'_> {
        Projected {
            coeffs: &self.coeffs,
            residual_sq: self.residual_sq,
            self_ip: self.self_ip,
            center_ip: self.center_ip,
        }
    }
}

/// Borrowed view of everything [`ip_bounds`] needs about one point.
#[derive(Clone, Copy, Debug)]
pub struct Projected<'a> {
    pub coeffs: &'a [f64],
    pub residual_sq: f64,
    pub self_ip: f64,
    pub center_ip: f64,
}

/// Incrementally orthogonalizes candidate pivots.
///
/// Used directly by the index, which keeps offering random candidates until
/// enough survive the dependence filter.
pub struct FrameBuilder<'a> {
    data: &'a Dataset,
    provider: &'a InnerProduct,
    center: Center,
    pivot_ids: Vec<usize>,
    tri: Vec<f64>,
    denoms: Vec<f64>,
    discarded: Vec<Discard>,
}

impl<'a> FrameBuilder<'a> {
    pub fn new(data: &'a Dataset, center: Center, provider: &'a InnerProduct) -> Self {
        Self {
            data,
            provider,
            center,
            pivot_ids: Vec::new(),
            tri: Vec::new(),
            denoms: Vec::new(),
            discarded: Vec::new(),
        }
    }

    /// Number of retained pivots so far.
    pub fn len(&self) -> usize {
        self.pivot_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivot_ids.is_empty()
    }

    /// Tries to append row `id` as the next pivot. Returns whether it was
    /// retained.
    pub fn offer(&mut self, id: usize) -> Result<bool> {
        self.data.check_index(id)?;
        if self.pivot_ids.contains(&id) || self.discarded.iter().any(|d| d.id == id) {
            return Err(Error::Parameter(format!(
                "pivot candidate {id} offered twice"
            )));
        }
        let k = self.pivot_ids.len();
        let r = PointRef::Row(id);
        let cr = self.center.with_row(id);
        let sqnorm_c = self
            .center
            .centered_sqnorm(self.provider.ip(self.data, r, r)?, cr);

        let mut row = vec![0.0; k];
        for i in 0..k {
            let raw = self
                .provider
                .ip(self.data, r, PointRef::Row(self.pivot_ids[i]))?;
            row[i] = self.coefficient(i, raw, cr, &row[..i]);
        }
        let res_sq = sqnorm_c - row.iter().map(|t| t * t).sum::<f64>();
        if !(sqnorm_c > 0.0) || res_sq <= DEPENDENCE_THRESHOLD * sqnorm_c {
            let relative_residual = if sqnorm_c > 0.0 {
                (res_sq / sqnorm_c).max(0.0)
            } else {
                0.0
            };
            if sqnorm_c <= 0.0 {
                warn!("pivot candidate {id} coincides with the center; discarded");
            }
            self.discarded.push(Discard {
                id,
                relative_residual,
            });
            return Ok(false);
        }
        self.tri.extend_from_slice(&row);
        self.denoms.push(res_sq.sqrt());
        self.pivot_ids.push(id);
        Ok(true)
    }

    /// `<x - c, r̂_i>` from the raw `<x, r_i>`, `<c, x>` and the already
    /// computed `<x - c, r̂_j>` for `j < i`.
    #[inline]
    fn coefficient(&self, i: usize, raw: f64, cx: f64, prev: &[f64]) -> f64 {
        coefficient(
            &self.tri,
            &self.denoms,
            self.center.cc(),
            self.center.with_row(self.pivot_ids[i]),
            i,
            raw,
            cx,
            prev,
        )
    }

    /// Computes coefficient tables for every dataset point.
    pub fn finish(self) -> Result<PivotFrame> {
        let n = self.data.n();
        let k = self.pivot_ids.len();
        let mut frame = PivotFrame {
            pivot_ids: self.pivot_ids,
            center: self.center,
            tri: self.tri,
            denoms: self.denoms,
            n,
            point_coeffs: vec![0.0; n * k],
            point_res: vec![0.0; n],
            point_sqnorm_c: vec![0.0; n],
            point_self_ip: vec![0.0; n],
            discarded: self.discarded,
        };
        let data = self.data;
        let provider = self.provider;
        let per_point: Vec<Projection> = (0..n)
            .into_par_iter()
            .map(|x| frame.project(data, provider, PointRef::Row(x)))
            .collect::<Result<_>>()?;
        for (x, p) in per_point.into_iter().enumerate() {
            frame.point_coeffs[x * k..(x + 1) * k].copy_from_slice(&p.coeffs);
            frame.point_res[x] = p.residual_sq;
            frame.point_sqnorm_c[x] = p.sqnorm_c;
            frame.point_self_ip[x] = p.self_ip;
        }
        Ok(frame)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn coefficient(
    tri: &[f64],
    denoms: &[f64],
    cc: f64,
    c_ri: f64,
    i: usize,
    raw: f64,
    cx: f64,
    prev: &[f64],
) -> f64 {
    let t_row = &tri[i * (i.saturating_sub(1)) / 2..][..i];
    let mut num = raw - cx - c_ri + cc;
    for (p, t) in prev.iter().zip(t_row) {
        num -= p * t;
    }
    num / denoms[i]
}

/// Orthogonalizes `candidates` in order, discarding those linearly dependent
/// on the pivots already retained.
pub fn orthogonalize(
    data: &Dataset,
    candidates: &[usize],
    center: Center,
    provider: &InnerProduct,
) -> Result<PivotFrame> {
    let mut builder = FrameBuilder::new(data, center, provider);
    for &id in candidates {
        builder.offer(id)?;
    }
    builder.finish()
}

impl PivotFrame {
    /// Retained pivot count `k`.
    pub fn k(&self) -> usize {
        self.pivot_ids.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pivot_ids(&self) -> &[usize] {
        &self.pivot_ids
    }

    pub fn center(&self) -> &Center {
        &self.center
    }

    pub fn discarded(&self) -> &[Discard] {
        &self.discarded
    }

    /// `T[i][j] = <r_i - c, r̂_j>` for `j < i`.
    pub fn tri(&self, i: usize, j: usize) -> f64 {
        assert!(j < i && i < self.k());
        self.tri[i * (i - 1) / 2 + j]
    }

    /// `D_i`, the norm of pivot `i` after removing earlier directions.
    pub fn denoms(&self) -> &[f64] {
        &self.denoms
    }

    pub fn point_coeffs(&self, x: usize) -> &[f64] {
        let k = self.k();
        &self.point_coeffs[x * k..(x + 1) * k]
    }

    pub fn point_residual(&self, x: usize) -> f64 {
        self.point_res[x]
    }

    pub fn point_sqnorm_c(&self, x: usize) -> f64 {
        self.point_sqnorm_c[x]
    }

    pub fn point_self_ip(&self, x: usize) -> f64 {
        self.point_self_ip[x]
    }

    /// Precomputed view of dataset row `x`.
    #[inline]
    pub fn point(&self, x: usize) -> Projected<'_> {
        Projected {
            coeffs: self.point_coeffs(x),
            residual_sq: self.point_res[x],
            self_ip: self.point_self_ip[x],
            center_ip: self.center.with_row(x),
        }
    }

    /// Coefficients of an arbitrary point against this frame: `k + 2` inner
    /// products (plus whatever `<c, q>` costs) and `O(k^2)` arithmetic.
    pub fn project(
        &self,
        data: &Dataset,
        provider: &InnerProduct,
        q: PointRef<'_>,
    ) -> Result<Projection> {
        provider.check_ref(data, q)?;
        let self_ip = provider.ip(data, q, q)?;
        let center_ip = self.center.with(data, provider, q)?;
        let sqnorm_c = self.center.centered_sqnorm(self_ip, center_ip);
        let k = self.k();
        let mut coeffs = vec![0.0; k];
        for i in 0..k {
            let raw = provider.ip(data, q, PointRef::Row(self.pivot_ids[i]))?;
            coeffs[i] = coefficient(
                &self.tri,
                &self.denoms,
                self.center.cc(),
                self.center.with_row(self.pivot_ids[i]),
                i,
                raw,
                center_ip,
                &coeffs[..i],
            );
        }
        let residual_sq = (sqnorm_c - projected_sq_norm(&coeffs)).max(0.0);
        Ok(Projection {
            coeffs,
            residual_sq,
            sqnorm_c,
            self_ip,
            center_ip,
        })
    }

    /// The orthonormal directions `r̂_i` as coordinate vectors. Only possible
    /// for the dot provider with a center that has coordinates.
    pub fn materialize_directions(
        &self,
        data: &Dataset,
        provider: &InnerProduct,
    ) -> Option<Vec<Vec<f64>>> {
        if !provider.is_dot() {
            return None;
        }
        let d = data.d();
        let c: Vec<f64> = match self.center.parts() {
            (None, None, false) => vec![0.0; d],
            (Some(v), _, _) => v.to_vec(),
            (None, Some(i), _) => data.row(i).to_vec(),
            _ => return None,
        };
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(self.k());
        for (i, &id) in self.pivot_ids.iter().enumerate() {
            let mut v: Vec<f64> = data.row(id).iter().zip(&c).map(|(r, c)| r - c).collect();
            for (j, dir) in dirs.iter().enumerate() {
                let t = self.tri(i, j);
                v.iter_mut().zip(dir).for_each(|(a, b)| *a -= t * b);
            }
            let inv = 1.0 / self.denoms[i];
            v.iter_mut().for_each(|a| *a *= inv);
            dirs.push(v);
        }
        Some(dirs)
    }
}

/// `Σ coeffs[i]^2`, the squared norm of the projection onto the pivot span.
#[inline]
pub fn projected_sq_norm(coeffs: &[f64]) -> f64 {
    coeffs.iter().map(|c| c * c).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    InnerProduct,
    SquaredDistance,
    Distance,
}

/// A closed interval `[lo, hi]` guaranteed to contain an inner product or a
/// (squared) distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsInterval {
    pub lo: f64,
    pub hi: f64,
    pub kind: BoundKind,
}

impl BoundsInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// Squared distance interval from an inner-product interval, given the
    /// self inner products of both points.
    pub fn to_sq_distance(&self, sq_x: f64, sq_y: f64) -> BoundsInterval {
        debug_assert_eq!(self.kind, BoundKind::InnerProduct);
        let base = sq_x + sq_y;
        BoundsInterval {
            lo: (base - 2.0 * self.hi).max(0.0),
            hi: (base - 2.0 * self.lo).max(0.0),
            kind: BoundKind::SquaredDistance,
        }
    }
}

/// Bounds on `<x, y>` from two projections onto the same frame.
///
/// The midpoint is the affine term `<c,x> + <c,y> - <c,c>` plus the
/// projected inner product; the half width is the Cauchy–Schwarz bound
/// `sqrt(|x⊥|^2 |y⊥|^2)` on the residual components.
pub fn ip_bounds(frame: &PivotFrame, x: Projected<'_>, y: Projected<'_>) -> Result<BoundsInterval> {
    let k = frame.k();
    if x.coeffs.len() != k || y.coeffs.len() != k {
        return Err(Error::FrameMismatch);
    }
    let (mid, half) = ip_mid_half(frame.center.cc(), x, y);
    Ok(BoundsInterval {
        lo: mid - half,
        hi: mid + half,
        kind: BoundKind::InnerProduct,
    })
}

#[inline]
pub(crate) fn ip_mid_half(cc: f64, x: Projected<'_>, y: Projected<'_>) -> (f64, f64) {
    let mut mid = x.center_ip + y.center_ip - cc;
    for (a, b) in x.coeffs.iter().zip(y.coeffs) {
        mid += a * b;
    }
    let half = (x.residual_sq.max(0.0) * y.residual_sq.max(0.0)).sqrt();
    (mid, half)
}

/// Distance interval from an inner-product interval: squared interval via
/// `|x|^2 + |y|^2 - 2<x,y>`, clamped at zero, then square-rooted.
pub fn dist_bounds(ip: BoundsInterval, sq_x: f64, sq_y: f64) -> BoundsInterval {
    let sq = ip.to_sq_distance(sq_x, sq_y);
    BoundsInterval {
        lo: sq.lo.sqrt(),
        hi: sq.hi.sqrt(),
        kind: BoundKind::Distance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataspace::CenterSpec;

    fn frame(rows: &[&[f64]], pivots: &[usize]) -> (Dataset, InnerProduct, PivotFrame) {
        let data = Dataset::from_rows(rows).unwrap();
        let ip = InnerProduct::dot();
        let c = Center::resolve(&data, &CenterSpec::None, &ip).unwrap();
        let f = orthogonalize(&data, pivots, c, &ip).unwrap();
        (data, ip, f)
    }

    #[test]
    fn collinear_candidate_discarded() {
        let (_, _, f) = frame(&[&[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]], &[0, 1, 2]);
        assert_eq!(f.pivot_ids(), &[0, 2]);
        assert_eq!(f.discarded().len(), 1);
        assert_eq!(f.discarded()[0].id, 1);
    }

    #[test]
    fn single_pivot_normalization() {
        let (data, ip, f) = frame(&[&[3.0, 4.0], &[1.0, 2.0]], &[0]);
        assert_eq!(f.denoms(), &[5.0]);
        let expected = 1.0 * 0.6 + 2.0 * 0.8;
        assert!((f.point_coeffs(1)[0] - expected).abs() < 1e-15);
        let q = f
            .project(&data, &ip, PointRef::Vector(&[-2.0, 1.0]))
            .unwrap();
        assert!((q.coeffs[0] - (-1.2 + 0.8)).abs() < 1e-15);
    }

    #[test]
    fn coeffs_against_diagonal_pivot() {
        let (data, ip, f) = frame(&[&[1.0, 1.0]], &[0]);
        let q = f
            .project(&data, &ip, PointRef::Vector(&[1.0, 2.0]))
            .unwrap();
        assert!((q.coeffs[0] - 3.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((q.residual_sq - 0.5).abs() < 1e-14);
        assert_eq!(q.sqnorm_c, 5.0);
    }

    #[test]
    fn self_projection_has_no_residual() {
        let (data, ip, f) = frame(&[&[2.0, -1.0, 0.5], &[0.0, 1.0, 1.0]], &[0, 1]);
        let q = f.project(&data, &ip, PointRef::Row(0)).unwrap();
        assert!((q.coeffs[0] - 5.25f64.sqrt()).abs() < 1e-14);
        assert!(q.coeffs[1].abs() < 1e-14);
        assert!(q.residual_sq < 1e-14);
    }

    #[test]
    fn orthogonal_query() {
        let (data, ip, f) = frame(&[&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]], &[0, 1]);
        let q = f
            .project(&data, &ip, PointRef::Vector(&[0.0, 0.0, 5.0]))
            .unwrap();
        assert_eq!(q.coeffs, vec![0.0, 0.0]);
        assert_eq!(q.residual_sq, 25.0);
    }

    #[test]
    fn projected_sq_norm_arithmetic() {
        assert_eq!(projected_sq_norm(&[]), 0.0);
        assert_eq!(projected_sq_norm(&[3.0, 4.0]), 25.0);
    }

    #[test]
    fn k0_bounds_are_triangle_inequality() {
        let (data, ip, f) = frame(&[&[1.0, 1.0]], &[]);
        let x = f
            .project(&data, &ip, PointRef::Vector(&[3.0, 0.0]))
            .unwrap();
        let y = f
            .project(&data, &ip, PointRef::Vector(&[0.0, 4.0]))
            .unwrap();
        let b = ip_bounds(&f, x.as_ref(), y.as_ref()).unwrap();
        assert_eq!((b.lo, b.hi), (-12.0, 12.0));
        let d = dist_bounds(b, x.self_ip, y.self_ip);
        assert_eq!((d.lo, d.hi), (1.0, 7.0));
        assert_eq!(d.kind, BoundKind::Distance);
    }

    #[test]
    fn one_pivot_bounds_hand_arithmetic() {
        let (data, ip, f) = frame(&[&[1.0, 1.0]], &[0]);
        let x = f
            .project(&data, &ip, PointRef::Vector(&[1.0, 2.0]))
            .unwrap();
        let y = f
            .project(&data, &ip, PointRef::Vector(&[2.0, 1.0]))
            .unwrap();
        let b = ip_bounds(&f, x.as_ref(), y.as_ref()).unwrap();
        assert!((b.lo - 4.0).abs() < 1e-14);
        assert!((b.hi - 5.0).abs() < 1e-14);
    }

    #[test]
    fn zero_residual_collapses_interval() {
        let (data, ip, f) = frame(&[&[2.0, 0.0]], &[0]);
        let x = f
            .project(&data, &ip, PointRef::Vector(&[3.0, 0.0]))
            .unwrap();
        let y = f
            .project(&data, &ip, PointRef::Vector(&[-1.0, 3.0]))
            .unwrap();
        assert_eq!(x.residual_sq, 0.0);
        let b = ip_bounds(&f, x.as_ref(), y.as_ref()).unwrap();
        assert_eq!((b.lo, b.hi), (-3.0, -3.0));
        let d = dist_bounds(b, x.self_ip, y.self_ip);
        assert_eq!(d.lo, 25f64.sqrt());
        assert_eq!(d.lo, d.hi);
    }

    #[test]
    fn mismatched_projection_rejected() {
        let (data, ip, f) = frame(&[&[1.0, 1.0], &[0.0, 1.0]], &[0, 1]);
        let x = f.project(&data, &ip, PointRef::Row(0)).unwrap();
        let short = Projected {
            coeffs: &[1.0],
            ..x.as_ref()
        };
        assert!(matches!(
            ip_bounds(&f, x.as_ref(), short),
            Err(Error::FrameMismatch)
        ));
    }

    #[test]
    fn all_candidates_discarded_gives_empty_frame() {
        let (_, _, f) = frame(&[&[0.0, 0.0], &[0.0, 0.0]], &[0, 1]);
        assert_eq!(f.k(), 0);
        assert_eq!(f.discarded().len(), 2);
        assert_eq!(f.point_residual(1), 0.0);
    }

    #[test]
    fn duplicate_candidate_is_an_error() {
        let data = Dataset::from_rows(&[[1.0, 0.0]]).unwrap();
        let ip = InnerProduct::dot();
        let c = Center::zero(1);
        assert!(orthogonalize(&data, &[0, 0], c, &ip).is_err());
    }
}
