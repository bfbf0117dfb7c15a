//! Expected variance captured by projections onto random in-distribution
//! pivots, and the intrinsic-dimensionality estimators built on it.
//!
//! `E^Σ_k` is the mean squared norm of `x - c` after projecting onto the
//! span of `k` distinct random dataset points (shifted by `c`), averaged
//! over the choice of points. `E_k = E^Σ_k - E^Σ_{k-1}` is what the `k`-th
//! pivot adds. Three ways to get them:
//!
//! * [`e_sigma_exhaustive`] enumerates every subset (small data only),
//! * [`MonteCarlo`] samples ordered pivot tuples,
//! * [`e_approx_from_spectrum`] approximates them from covariance
//!   eigenvalues in `Θ(d k)`.
//!
//! All second moments are taken about the [`View`]'s center: about the
//! origin for `CenterSpec::None`, about the mean for `CenterSpec::Mean`.

mod approx;
mod exhaustive;
mod monte_carlo;
mod space;

pub use approx::{ARecursion, ApproxTrace};
pub use exhaustive::EXHAUSTIVE_BUDGET;
pub use monte_carlo::sample_rng;

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataspace::{CenterSpec, Dataset, InnerProduct, PointRef};
use crate::error::{Error, Result};
use crate::index::{KnnKind, PflsIndex};
use space::Space;

/// Which points, centered where, the estimators look at.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub center: CenterSpec,
    /// Scale every point to unit norm (before centering).
    pub normalize: bool,
}

impl View {
    pub fn centered(center: CenterSpec) -> Self {
        Self {
            center,
            normalize: false,
        }
    }

    /// Unit-norm points about the origin, as used by ABID.
    pub fn normalized() -> Self {
        Self {
            center: CenterSpec::None,
            normalize: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exhaustive,
    MonteCarlo,
    EigenApprox,
}

/// How pivot sets were enumerated or drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    UnorderedSubsets,
    OrderedTuples,
    Spectrum,
}

/// `E_k` and `E^Σ_k` for `k = 1..=K`.
///
/// Serializes to `{method, K, E, Esum, total_var, samples?, seed?, stderr?}`
/// plus provenance fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub method: Method,
    #[serde(rename = "K")]
    pub k_max: usize,
    #[serde(rename = "E")]
    pub e: Vec<f64>,
    #[serde(rename = "Esum")]
    pub esum: Vec<f64>,
    /// Trace of the second-moment matrix about the view's center.
    pub total_var: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Standard errors of `Esum[k]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    /// Standard errors of `E[k]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr_e: Option<Vec<f64>>,
    pub sampling: Sampling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<View>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recursion: Option<ARecursion>,
}

impl SpectralProfile {
    fn from_esum(method: Method, sampling: Sampling, esum: Vec<f64>, total_var: f64) -> Self {
        let e = esum
            .iter()
            .scan(0.0, |prev, &s| {
                let d = s - *prev;
                *prev = s;
                Some(d)
            })
            .collect();
        Self::new(method, sampling, e, esum, total_var)
    }

    fn from_e(method: Method, sampling: Sampling, e: Vec<f64>, total_var: f64) -> Self {
        let esum = e
            .iter()
            .scan(0.0, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        Self::new(method, sampling, e, esum, total_var)
    }

    fn new(
        method: Method,
        sampling: Sampling,
        e: Vec<f64>,
        esum: Vec<f64>,
        total_var: f64,
    ) -> Self {
        Self {
            method,
            k_max: e.len(),
            e,
            esum,
            total_var,
            samples: None,
            seed: None,
            stderr: None,
            stderr_e: None,
            sampling,
            view: None,
            recursion: None,
        }
    }

    /// `E_k`, 1-based.
    pub fn e_k(&self, k: usize) -> f64 {
        self.e[k - 1]
    }

    /// `E^Σ_k`, 1-based; `E^Σ_0 = 0`.
    pub fn esum_k(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.esum[k - 1]
        }
    }
}

fn check_k_max(data: &Dataset, provider: &InnerProduct, k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    if provider.is_dot() && k_max > data.d() {
        return Err(Error::Parameter(format!(
            "K = {k_max} exceeds the dimension {}",
            data.d()
        )));
    }
    Ok(())
}

/// Exact `E^Σ_k` for `k <= k_max` by enumerating all unordered subsets of
/// linearly independent points. Refuses when any `C(n, k)` exceeds
/// [`EXHAUSTIVE_BUDGET`].
pub fn e_sigma_exhaustive(
    data: &Dataset,
    provider: &InnerProduct,
    view: &View,
    k_max: usize,
) -> Result<SpectralProfile> {
    check_k_max(data, provider, k_max)?;
    let space = Space::new(data, provider, view)?;
    let esum = exhaustive::esum_exhaustive(&space, k_max)?;
    let mut p = SpectralProfile::from_esum(
        Method::Exhaustive,
        Sampling::UnorderedSubsets,
        esum,
        space.total_var(),
    );
    p.view = Some(view.clone());
    Ok(p)
}

/// How Monte-Carlo samples evaluate the variance covered by a pivot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McRoute {
    /// `SecondMoment` for the dot provider, `InnerProducts` otherwise.
    #[default]
    Auto,
    /// Projects every point through inner products: `O(n k)` evaluations
    /// per pivot. Works in any inner-product space.
    InnerProducts,
    /// Materializes `r̂` and evaluates `r̂ᵀ M r̂`: `O(d^2 + d k)` per pivot.
    /// Dot provider only.
    SecondMoment,
}

/// Seeded Monte-Carlo estimate of `E_k` over ordered pivot tuples.
///
/// Sample `i` draws its tuple from [`sample_rng`]`(seed, i)`; candidates
/// linearly dependent on the pivots already drawn are skipped and replaced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    pub route: McRoute,
}

impl MonteCarlo {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            route: McRoute::Auto,
        }
    }

    pub fn with_route(mut self, route: McRoute) -> Self {
        self.route = route;
        self
    }

    fn use_moment(&self, provider: &InnerProduct) -> Result<bool> {
        match self.route {
            McRoute::Auto => Ok(provider.is_dot()),
            McRoute::InnerProducts => Ok(false),
            McRoute::SecondMoment if provider.is_dot() => Ok(true),
            McRoute::SecondMoment => Err(Error::Unsupported(
                "the second-moment route needs the dot provider".into(),
            )),
        }
    }

    /// Per-pivot variance gains of sample `index`.
    pub fn sample(
        &self,
        data: &Dataset,
        provider: &InnerProduct,
        view: &View,
        k_max: usize,
        index: u64,
    ) -> Result<Vec<f64>> {
        check_k_max(data, provider, k_max)?;
        let space = Space::new(data, provider, view)?;
        let mut rng = sample_rng(self.seed, index);
        if self.use_moment(provider)? {
            let vectors = space.vectors(view).expect("dot provider");
            let moment = space.second_moment(view).expect("dot provider");
            monte_carlo::sample_increments_moment(&vectors, &moment, k_max, &mut rng)
        } else {
            monte_carlo::sample_increments_ip(&space, k_max, &mut rng)
        }
    }

    pub fn run(
        &self,
        data: &Dataset,
        provider: &InnerProduct,
        view: &View,
        k_max: usize,
    ) -> Result<SpectralProfile> {
        if self.samples == 0 {
            return Err(Error::Parameter("need at least one sample".into()));
        }
        check_k_max(data, provider, k_max)?;
        let space = Space::new(data, provider, view)?;
        let increments: Vec<Vec<f64>> = if self.use_moment(provider)? {
            let vectors = space.vectors(view).expect("dot provider");
            let moment = space.second_moment(view).expect("dot provider");
            (0..self.samples as u64)
                .into_par_iter()
                .map(|i| {
                    monte_carlo::sample_increments_moment(
                        &vectors,
                        &moment,
                        k_max,
                        &mut sample_rng(self.seed, i),
                    )
                })
                .collect::<Result<_>>()?
        } else {
            (0..self.samples as u64)
                .into_par_iter()
                .map(|i| {
                    monte_carlo::sample_increments_ip(&space, k_max, &mut sample_rng(self.seed, i))
                })
                .collect::<Result<_>>()?
        };

        let s = self.samples as f64;
        let mut e = vec![0.0; k_max];
        let mut esum = vec![0.0; k_max];
        for inc in &increments {
            let mut acc = 0.0;
            for k in 0..k_max {
                acc += inc[k];
                e[k] += inc[k];
                esum[k] += acc;
            }
        }
        e.iter_mut().for_each(|v| *v /= s);
        esum.iter_mut().for_each(|v| *v /= s);

        let (stderr, stderr_e) = if self.samples > 1 {
            let mut var_sum = vec![0.0; k_max];
            let mut var_e = vec![0.0; k_max];
            for inc in &increments {
                let mut acc = 0.0;
                for k in 0..k_max {
                    acc += inc[k];
                    var_sum[k] += (acc - esum[k]).powi(2);
                    var_e[k] += (inc[k] - e[k]).powi(2);
                }
            }
            let se = |v: Vec<f64>| v.into_iter().map(|v| (v / (s - 1.0) / s).sqrt()).collect();
            (Some(se(var_sum)), Some(se(var_e)))
        } else {
            (None, None)
        };

        let mut p = SpectralProfile::new(
            Method::MonteCarlo,
            Sampling::OrderedTuples,
            e,
            esum,
            space.total_var(),
        );
        p.samples = Some(self.samples);
        p.seed = Some(self.seed);
        p.stderr = stderr;
        p.stderr_e = stderr_e;
        p.view = Some(view.clone());
        Ok(p)
    }
}

/// Monte-Carlo `E^Σ_k` with the default route.
pub fn e_sigma_monte_carlo(
    data: &Dataset,
    provider: &InnerProduct,
    view: &View,
    k_max: usize,
    samples: usize,
    seed: u64,
) -> Result<SpectralProfile> {
    MonteCarlo::new(samples, seed).run(data, provider, view, k_max)
}

/// Approximated `E_k` for `k = 1..=d` from the covariance eigenvalues, with
/// the excess over `Σλ` cut off.
pub fn e_approx_from_spectrum(lambdas: &[f64]) -> Result<SpectralProfile> {
    approximate_spectrum(lambdas, lambdas.len(), ARecursion::default()).map(|(p, _)| p)
}

/// [`e_approx_from_spectrum`] up to `k_max`, with a choice of recursion and
/// the per-step eigenvalue state.
pub fn approximate_spectrum(
    lambdas: &[f64],
    k_max: usize,
    recursion: ARecursion,
) -> Result<(SpectralProfile, ApproxTrace)> {
    let trace = approx::approximate(lambdas, k_max, recursion)?;
    let total: f64 = lambdas.iter().sum();
    let mut p = SpectralProfile::from_e(
        Method::EigenApprox,
        Sampling::Spectrum,
        trace.e.clone(),
        total,
    );
    p.recursion = Some(recursion);
    Ok((p, trace))
}

/// Eigenvalues of the second-moment matrix about the view's center, in
/// descending order. Dot provider only.
pub fn covariance_spectrum(
    data: &Dataset,
    provider: &InnerProduct,
    view: &View,
) -> Result<Vec<f64>> {
    if !provider.is_dot() {
        return Err(Error::Unsupported(
            "covariance eigenvalues need explicit coordinates (dot provider)".into(),
        ));
    }
    let space = Space::new(data, provider, view)?;
    let m = space.second_moment(view).expect("dot provider");
    let mut lambdas: Vec<f64> = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0))
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok(lambdas)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbidMethod {
    Exhaustive,
    MonteCarlo { samples: usize, seed: u64 },
    Eigen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Abid(AbidMethod),
    Trip { k: usize, eta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    /// `+∞` when undefined.
    #[serde(with = "finite_or_null")]
    pub value: f64,
    pub estimator: Estimator,
    /// False when the estimate divides by a vanishing `E_k`.
    pub defined: bool,
}

/// ABID: the reciprocal of `E_1` on unit-normalized data. Zero-norm points
/// are left out.
pub fn abid(data: &Dataset, provider: &InnerProduct, method: AbidMethod) -> Result<IdEstimate> {
    let view = View::normalized();
    let e1 = match method {
        AbidMethod::Exhaustive => e_sigma_exhaustive(data, provider, &view, 1)?.e[0],
        AbidMethod::MonteCarlo { samples, seed } => {
            MonteCarlo::new(samples, seed)
                .run(data, provider, &view, 1)?
                .e[0]
        }
        AbidMethod::Eigen => covariance_spectrum(data, provider, &view)?
            .iter()
            .map(|l| l * l)
            .sum(),
    };
    if !(e1 > 0.0) {
        return Err(Error::Parameter(format!("E_1 of normalized data is {e1}")));
    }
    Ok(IdEstimate {
        value: 1.0 / e1,
        estimator: Estimator::Abid(method),
        defined: true,
    })
}

/// `k + ((1 - η) total_var - E^Σ_k) / E_k`: how many projections it takes to
/// explain `1 - η` of the variance if every further one adds `E_k`.
pub fn trip(profile: &SpectralProfile, k: usize, eta: f64) -> Result<IdEstimate> {
    if k == 0 || k > profile.k_max {
        return Err(Error::Parameter(format!(
            "k = {k} outside 1..={}",
            profile.k_max
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Parameter(format!("eta = {eta} outside [0, 1]")));
    }
    let estimator = Estimator::Trip { k, eta };
    let e_k = profile.e_k(k);
    if !(e_k > 0.0) {
        return Ok(IdEstimate {
            value: f64::INFINITY,
            estimator,
            defined: false,
        });
    }
    let value = k as f64 + ((1.0 - eta) * profile.total_var - profile.esum_k(k)) / e_k;
    Ok(IdEstimate {
        value,
        estimator,
        defined: true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotSuggestion {
    pub k: usize,
    /// False when no `k <= K` satisfied `TRIP(k) <= k`; `k` is then `K`.
    pub converged: bool,
}

/// The smallest `k` with `TRIP(k, η) <= k`.
pub fn suggest_pivots(profile: &SpectralProfile, eta: f64) -> Result<PivotSuggestion> {
    for k in 1..=profile.k_max {
        let t = trip(profile, k, eta)?;
        if t.defined && t.value <= k as f64 {
            return Ok(PivotSuggestion { k, converged: true });
        }
    }
    Ok(PivotSuggestion {
        k: profile.k_max,
        converged: false,
    })
}

/// Percentile with linear interpolation between closest ranks, `p` in
/// percent.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Parameter(format!("percentile {p} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Squared distance from every point to its nearest other point.
pub fn nn_sq_distances(data: &Dataset, provider: &InnerProduct) -> Result<Vec<f64>> {
    if data.n() < 2 {
        return Err(Error::Parameter(
            "nearest neighbors need at least two points".into(),
        ));
    }
    let k = if provider.is_dot() {
        data.d()
    } else {
        data.n() - 1
    }
    .min(32);
    let index = PflsIndex::build(
        Arc::new(data.clone()),
        Arc::new(provider.clone()),
        k,
        &CenterSpec::None,
        0x6e6e,
    )?;
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            let res = index.knn(PointRef::Row(i), 2, KnnKind::SmallestDistance)?;
            let nn = res
                .hits
                .iter()
                .find(|h| h.id != i)
                .expect("two hits from at least two points");
            Ok(nn.value * nn.value)
        })
        .collect()
}

/// `η = δ² / total_var` with `δ²` the given percentile of squared 1-NN
/// distances, clamped to `[0, 1]`.
pub fn eta_from_nn(
    data: &Dataset,
    provider: &InnerProduct,
    view: &View,
    percentile_pct: f64,
) -> Result<f64> {
    if !(percentile_pct > 0.0 && percentile_pct < 100.0) {
        return Err(Error::Parameter(format!(
            "percentile {percentile_pct} outside (0, 100)"
        )));
    }
    let sq = nn_sq_distances(data, provider)?;
    let delta_sq = percentile(&sq, percentile_pct)?;
    let total = Space::new(data, provider, view)?.total_var();
    if !(total > 0.0) {
        return Ok(0.0);
    }
    Ok((delta_sq / total).clamp(0.0, 1.0))
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
