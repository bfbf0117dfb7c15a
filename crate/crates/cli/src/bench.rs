//! `bench`: pruning statistics over a grid of pivot counts.
//!
//! Every `(k, repeat)` pair gets a fresh index whose pivot seed is derived
//! from `(seed, k, repeat)`, unless `--reuse-index` asks for one index per
//! `k`. Recall is re-verified against a brute-force scan on every hundredth
//! query.

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use log::warn;
use pfls_core::dataspace::{Dataset, InnerProduct, PointRef};
use pfls_core::index::{brute_force_knn, brute_force_range, PflsIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::commands::{answer, Op};
use crate::input::{dataset_hash, load, load_data, provider};
use crate::{DataArgs, QueryMode, Usage};

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Query file.
    #[arg(long, required_unless_present = "holdout", conflicts_with = "holdout")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub queries_format: Option<String>,
    /// Fraction of the input held out as queries, drawn with `--seed`.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Use only the first N queries.
    #[arg(long)]
    pub query_count: Option<usize>,
    /// Comma-separated pivot counts.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8,16")]
    pub pivot_grid: Vec<usize>,
    /// Fresh indexes per pivot count.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub mode: QueryMode,
    #[arg(long)]
    pub kind: Option<String>,
    /// Build one index per pivot count and reuse it across repeats.
    #[arg(long)]
    pub reuse_index: bool,
    /// Also write the full report with per-query distributions here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Pivot seed for pivot count `k` and repeat `r`.
pub fn derive_seed(seed: u64, k: usize, r: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ k as u64) ^ r as u64)
}

#[derive(Serialize)]
struct Repeat {
    seed: u64,
    retained: usize,
    build_time_s: f64,
    exact_evals: Vec<u64>,
    time_ns: Vec<u64>,
    recall: f64,
}

#[derive(Serialize)]
struct Row {
    k: usize,
    retained_mean: f64,
    exact_evals_mean: f64,
    exact_evals_min: u64,
    exact_evals_max: u64,
    time_us_mean: f64,
    time_us_min: f64,
    time_us_max: f64,
    recall: f64,
    build_time_s_mean: f64,
}

fn summarize(k: usize, reps: &[Repeat]) -> Row {
    let evals: Vec<u64> = reps
        .iter()
        .flat_map(|r| r.exact_evals.iter().copied())
        .collect();
    let times: Vec<f64> = reps
        .iter()
        .flat_map(|r| r.time_ns.iter().map(|&t| t as f64 / 1e3))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let per_rep = |f: fn(&Repeat) -> f64| mean(&reps.iter().map(f).collect::<Vec<_>>());
    Row {
        k,
        retained_mean: per_rep(|r| r.retained as f64),
        exact_evals_mean: mean(&evals.iter().map(|&e| e as f64).collect::<Vec<_>>()),
        exact_evals_min: evals.iter().copied().min().unwrap_or(0),
        exact_evals_max: evals.iter().copied().max().unwrap_or(0),
        time_us_mean: mean(&times),
        time_us_min: times.iter().copied().fold(f64::INFINITY, f64::min),
        time_us_max: times.iter().copied().fold(0.0, f64::max),
        recall: reps.iter().map(|r| r.recall).fold(1.0, f64::min),
        build_time_s_mean: per_rep(|r| r.build_time_s),
    }
}

/// Fraction of brute-force hits that the index also returned.
fn recall(index: &PflsIndex, queries: &Dataset, op: Op) -> Result<f64> {
    let (mut found, mut total) = (0usize, 0usize);
    for i in (0..queries.n()).step_by(100) {
        let q = PointRef::Vector(queries.row(i));
        let got: HashSet<usize> = answer(index, q, op)?.hits.iter().map(|h| h.0).collect();
        let want: Vec<usize> = match op {
            Op::Knn(n, kind) => brute_force_knn(index.data(), index.provider(), q, n, kind)?
                .iter()
                .map(|h| h.id)
                .collect(),
            Op::Range(eps, kind) => {
                brute_force_range(index.data(), index.provider(), q, eps, kind)?
                    .iter()
                    .map(|h| h.id)
                    .collect()
            }
        };
        total += want.len();
        found += want.iter().filter(|id| got.contains(id)).count();
    }
    Ok(if total == 0 {
        1.0
    } else {
        found as f64 / total as f64
    })
}

fn split(data: Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Usage(format!("--holdout must be in (0, 1), got {fraction}")).into());
    }
    let mut ids: Vec<usize> = (0..data.n()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let m = ((data.n() as f64 * fraction).ceil() as usize).clamp(1, data.n() - 1);
    let (q, rest) = ids.split_at(m);
    let (mut q, mut rest) = (q.to_vec(), rest.to_vec());
    q.sort_unstable();
    rest.sort_unstable();
    Ok((data.select(&rest)?, data.select(&q)?))
}

fn pivot_grid(grid: &[usize], data: &Dataset, provider: &InnerProduct) -> Vec<usize> {
    let cap = if provider.is_dot() {
        data.d().min(data.n())
    } else {
        data.n()
    };
    let mut out: Vec<usize> = grid
        .iter()
        .map(|&k| {
            if k > cap {
                warn!("pivot count {k} exceeds {cap}; clamped");
            }
            k.min(cap)
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn run(args: BenchArgs) -> Result<()> {
    let op = Op::resolve(args.mode, args.kind.as_deref())?;
    if args.repeats == 0 {
        return Err(Usage("--repeats must be positive".into()).into());
    }
    let input = load_data(&args.data)?;
    let (data, mut queries) = match (&args.queries, args.holdout) {
        (Some(path), _) => (input, load(path, args.queries_format.as_deref())?),
        (None, Some(f)) => split(input, f, args.seed)?,
        (None, None) => unreachable!("clap requires one of --queries and --holdout"),
    };
    if queries.d() != data.d() {
        return Err(pfls_core::Error::Dimension {
            expected: data.d(),
            got: queries.d(),
        })
        .context("query file does not match the dataset");
    }
    if let Some(m) = args.query_count {
        let ids: Vec<usize> = (0..m.min(queries.n())).collect();
        queries = queries.select(&ids)?;
    }
    let provider = Arc::new(provider(&args.data.kernel)?);
    let data = Arc::new(data);
    let grid = pivot_grid(&args.pivot_grid, &data, &provider);

    let mut rows = Vec::new();
    let mut report = Vec::new();
    for &k in &grid {
        let mut reps = Vec::with_capacity(args.repeats);
        let mut shared: Option<(PflsIndex, f64)> = None;
        for r in 0..args.repeats {
            let seed = derive_seed(args.seed, k, if args.reuse_index { 0 } else { r });
            let (index, build_time_s) = match &shared {
                Some((index, t)) => (index.clone(), *t),
                None => {
                    let start = Instant::now();
                    let index = PflsIndex::build(
                        data.clone(),
                        provider.clone(),
                        k,
                        &args.data.center,
                        seed,
                    )?;
                    (index, start.elapsed().as_secs_f64())
                }
            };
            let answers = (0..queries.n())
                .into_par_iter()
                .map(|i| answer(&index, PointRef::Vector(queries.row(i)), op))
                .collect::<Result<Vec<_>>>()?;
            reps.push(Repeat {
                seed,
                retained: index.frame().k(),
                build_time_s,
                exact_evals: answers.iter().map(|a| a.exact_evals).collect(),
                time_ns: answers.iter().map(|a| a.time_ns).collect(),
                recall: recall(&index, &queries, op)?,
            });
            if args.reuse_index && shared.is_none() {
                shared = Some((index, build_time_s));
            }
        }
        let row = summarize(k, &reps);
        if row.recall < 1.0 {
            warn!("recall {} below 1 at k={k}", row.recall);
        }
        report.push(json!({ "k": k, "summary": &row, "repeats": reps }));
        rows.push(row);
    }

    let mut out = csv::Writer::from_writer(std::io::stdout().lock());
    for row in &rows {
        out.serialize(row)?;
    }
    out.flush()?;

    if let Some(path) = &args.json {
        let full = json!({
            "metadata": {
                "dataset_hash": dataset_hash(&data),
                "n": data.n(),
                "d": data.d(),
                "queries": queries.n(),
                "seed": args.seed,
                "repeats": args.repeats,
                "reuse_index": args.reuse_index,
                "center": args.data.center.to_string(),
                "kernel": args.data.kernel.to_string(),
                "query": op.describe(),
            },
            "rows": report,
        });
        let file =
            std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &full)?;
    }
    Ok(())
}
