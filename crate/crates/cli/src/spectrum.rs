//! `spectrum`: spectral profile, TRIP curve and suggested pivot count.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use pfls_core::spectral::{
    approximate_spectrum, covariance_spectrum, e_sigma_exhaustive, eta_from_nn, suggest_pivots,
    trip, ARecursion, McRoute, MonteCarlo, SpectralProfile, View,
};
use serde::Serialize;
use serde_json::json;

use crate::input::{load_data, print_json, provider};
use crate::{DataArgs, Usage};

#[derive(Clone, Copy, Debug)]
pub enum MethodArg {
    Exhaustive,
    MonteCarlo(usize),
    Eigen,
}

impl FromStr for MethodArg {
    type Err = String;

    /// `exhaustive`, `mc:SAMPLES` or `eigen`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "eigen" => Ok(Self::Eigen),
            _ => s
                .strip_prefix("mc:")
                .and_then(|v| v.parse().ok())
                .filter(|&n| n > 0)
                .map(Self::MonteCarlo)
                .ok_or_else(|| format!("expected exhaustive, mc:SAMPLES or eigen, got '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RouteArg {
    Auto,
    InnerProducts,
    SecondMoment,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RecursionArg {
    SelfConsistent,
    Lagged,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("eta_source").required(true).args(["eta", "eta_from_nn"])))]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `exhaustive`, `mc:SAMPLES` or `eigen`.
    #[arg(long)]
    pub method: MethodArg,
    #[arg(long)]
    pub max_k: usize,
    /// Fraction of total variance treated as noise, in [0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Derive eta from this percentile of squared 1-NN distances.
    #[arg(long)]
    pub eta_from_nn: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte-Carlo evaluation route.
    #[arg(long, value_enum, default_value = "auto")]
    pub route: RouteArg,
    /// Eigenvalue update used by the eigen method.
    #[arg(long, value_enum, default_value = "self-consistent")]
    pub recursion: RecursionArg,
    /// Also write the TRIP curve as CSV here.
    #[arg(long)]
    pub trip_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct TripRow {
    k: usize,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "Esum")]
    esum: f64,
    trip: Option<f64>,
    defined: bool,
}

fn profile(args: &SpectrumArgs, view: &View) -> Result<SpectralProfile> {
    let data = load_data(&args.data)?;
    let provider = provider(&args.data.kernel)?;
    Ok(match args.method {
        MethodArg::Exhaustive => e_sigma_exhaustive(&data, &provider, view, args.max_k)?,
        MethodArg::MonteCarlo(samples) => {
            let route = match args.route {
                RouteArg::Auto => McRoute::Auto,
                RouteArg::InnerProducts => McRoute::InnerProducts,
                RouteArg::SecondMoment => McRoute::SecondMoment,
            };
            MonteCarlo::new(samples, args.seed)
                .with_route(route)
                .run(&data, &provider, view, args.max_k)?
        }
        MethodArg::Eigen => {
            let recursion = match args.recursion {
                RecursionArg::SelfConsistent => ARecursion::SelfConsistent,
                RecursionArg::Lagged => ARecursion::Lagged,
            };
            let lambdas = covariance_spectrum(&data, &provider, view)?;
            let (mut p, _) = approximate_spectrum(&lambdas, args.max_k, recursion)?;
            p.view = Some(view.clone());
            p
        }
    })
}

pub fn run(args: SpectrumArgs) -> Result<()> {
    let view = View::centered(args.data.center.clone());
    let (eta, source) = match (args.eta, args.eta_from_nn) {
        (Some(eta), None) => {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Usage(format!("--eta must be in [0, 1], got {eta}")).into());
            }
            (eta, json!("given"))
        }
        (None, Some(p)) => {
            let data = load_data(&args.data)?;
            let provider = provider(&args.data.kernel)?;
            let eta = eta_from_nn(&data, &provider, &view, p).context("deriving eta")?;
            (eta, json!({ "nn_percentile": p }))
        }
        _ => unreachable!("clap requires exactly one eta source"),
    };
    let profile = profile(&args, &view)?;

    let rows = (1..=profile.k_max)
        .map(|k| {
            let t = trip(&profile, k, eta)?;
            Ok(TripRow {
                k,
                e: profile.e_k(k),
                esum: profile.esum_k(k),
                trip: t.defined.then_some(t.value),
                defined: t.defined,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let suggestion = suggest_pivots(&profile, eta)?;

    if let Some(path) = &args.trip_csv {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    print_json(&json!({
        "profile": profile,
        "eta": eta,
        "eta_source": source,
        "trip": rows,
        "suggested_pivots": suggestion,
    }))
}
