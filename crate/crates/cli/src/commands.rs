//! `build`, `query` and `convert`.

use std::io::{BufWriter, Write};
use std::time::Instant;

use anyhow::{Context, Result};
use pfls_core::dataspace::PointRef;
use pfls_core::index::{KnnKind, PflsIndex, RangeKind};
use rayon::prelude::*;
use serde_json::json;

use crate::input::{format_for, load, load_data, print_json, provider};
use crate::{BuildArgs, ConvertArgs, QueryArgs, QueryMode, Usage};

pub fn build(args: BuildArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let provider = provider(&args.data.kernel)?;
    let start = Instant::now();
    let index = PflsIndex::build(data, provider, args.pivots, &args.data.center, args.seed)?;
    let build_time = start.elapsed();
    index
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    print_json(&json!({
        "retained": index.frame().k(),
        "requested": args.pivots,
        "discarded": index.frame().discarded().len(),
        "build_time_s": build_time.as_secs_f64(),
    }))
}

/// A query operation with its kind resolved against the mode flag.
#[derive(Clone, Copy, Debug)]
pub enum Op {
    Knn(usize, KnnKind),
    Range(f64, RangeKind),
}

impl Op {
    pub fn resolve(mode: QueryMode, kind: Option<&str>) -> Result<Self> {
        let mismatch =
            |k: &str, flag: &str| Usage(format!("--kind {k} cannot be used with {flag}"));
        match (mode.knn, mode.range) {
            (Some(n), None) => {
                let kind = match kind {
                    None => KnnKind::SmallestDistance,
                    Some(k) => k.parse().map_err(|_| mismatch(k, "--knn"))?,
                };
                Ok(Op::Knn(n, kind))
            }
            (None, Some(eps)) => {
                let kind = match kind {
                    None => RangeKind::DistanceWithin,
                    Some(k) => k.parse().map_err(|_| mismatch(k, "--range"))?,
                };
                Ok(Op::Range(eps, kind))
            }
            _ => Err(Usage("exactly one of --knn and --range is required".into()).into()),
        }
    }

    pub fn describe(self) -> serde_json::Value {
        match self {
            Op::Knn(n, kind) => json!({ "knn": n, "kind": kind }),
            Op::Range(eps, kind) => json!({ "range": eps, "kind": kind }),
        }
    }
}

/// Result of one query: `(id, value)` pairs plus counters.
pub struct Answer {
    pub hits: Vec<(usize, Option<f64>)>,
    pub exact_evals: u64,
    pub time_ns: u64,
}

pub fn answer(index: &PflsIndex, q: PointRef<'_>, op: Op) -> Result<Answer> {
    Ok(match op {
        Op::Knn(n, kind) => {
            let r = index.knn(q, n, kind)?;
            Answer {
                hits: r.hits.iter().map(|h| (h.id, Some(h.value))).collect(),
                exact_evals: r.stats.exact_evals,
                time_ns: r.stats.total_time.as_nanos() as u64,
            }
        }
        Op::Range(eps, kind) => {
            let r = index.range(q, eps, kind)?;
            Answer {
                hits: r.hits.iter().map(|h| (h.id, h.value)).collect(),
                exact_evals: r.stats.exact_evals,
                time_ns: r.stats.total_time.as_nanos() as u64,
            }
        }
    })
}

pub fn query(args: QueryArgs) -> Result<()> {
    let op = Op::resolve(args.mode, args.kind.as_deref())?;
    let index = PflsIndex::load(&args.index)
        .with_context(|| format!("reading index {}", args.index.display()))?;
    let queries = load(&args.queries, args.format.as_deref())?;
    if queries.d() != index.data().d() {
        return Err(pfls_core::Error::Dimension {
            expected: index.data().d(),
            got: queries.d(),
        })
        .context("query file does not match the index");
    }
    let answers = (0..queries.n())
        .into_par_iter()
        .map(|i| answer(&index, PointRef::Vector(queries.row(i)), op))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BufWriter::new(std::io::stdout().lock());
    for (i, a) in answers.iter().enumerate() {
        let line = json!({
            "query_index": i,
            "hits": a.hits,
            "stats": { "exact_evals": a.exact_evals, "time_ns": a.time_ns },
        });
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn convert(args: ConvertArgs) -> Result<()> {
    let data = load(&args.input, args.format.as_deref())?;
    let to = format_for(&args.out, args.to.as_deref())?;
    data.save(&args.out, to)
        .with_context(|| format!("writing {}", args.out.display()))?;
    print_json(&json!({ "n": data.n(), "d": data.d() }))
}
