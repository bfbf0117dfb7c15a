//! Dataset loading and small output helpers shared by the commands.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use pfls_core::dataspace::{Dataset, Format, InnerProduct, Kernel};
use sha2::{Digest, Sha256};

use crate::{DataArgs, Usage};

/// Explicit format, or one inferred from the file extension.
pub fn format_for(path: &Path, explicit: Option<&str>) -> Result<Format> {
    if let Some(f) = explicit {
        return f
            .parse()
            .map_err(|e: pfls_core::Error| Usage(e.to_string()).into());
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(Format::Csv),
        Some("bin" | "pfls") => Ok(Format::PflsBin),
        _ => Err(Usage(format!(
            "cannot infer the format of {}; pass --format csv|pfls-bin",
            path.display()
        ))
        .into()),
    }
}

pub fn load(path: &Path, format: Option<&str>) -> Result<Dataset> {
    let format = format_for(path, format)?;
    Dataset::load(path, format).with_context(|| format!("reading {}", path.display()))
}

pub fn load_data(args: &DataArgs) -> Result<Dataset> {
    load(&args.input, args.format.as_deref())
}

pub fn provider(kernel: &Kernel) -> Result<InnerProduct> {
    Ok(InnerProduct::kernel(kernel.clone())?)
}

/// SHA-256 over the shape and the little-endian coordinate bytes.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.d() as u64).to_le_bytes());
    for v in data.as_flat() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
