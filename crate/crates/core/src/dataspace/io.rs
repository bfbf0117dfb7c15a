//! CSV and `pfls-bin` dataset formats.
//!
//! `pfls-bin` layout (all integers and floats little-endian):
//!
//! | offset | size  | field                    |
//! |--------|-------|--------------------------|
//! | 0      | 4     | magic `PFLS`             |
//! | 4      | 4     | version, u32 = 1         |
//! | 8      | 8     | n, u64                   |
//! | 16     | 8     | d, u64                   |
//! | 24     | 8·n·d | coordinates, f64, rows   |

use std::io::{Read, Write};

use super::Dataset;
use crate::error::{Error, Result};

pub const BIN_MAGIC: &[u8; 4] = b"PFLS";
pub const BIN_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    PflsBin,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "pfls-bin" | "bin" => Ok(Self::PflsBin),
            other => Err(Error::Parameter(format!("unknown format '{other}'"))),
        }
    }
}

/// Parses headerless comma-separated rows of decimal floats.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut coords = Vec::new();
    let mut d = None;
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        let width = *d.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: j + 1,
                msg: format!("'{cell}' is not a number"),
            })?;
            coords.push(v);
        }
        n += 1;
    }
    let d = d.ok_or(Error::Empty)?;
    Dataset::from_flat(n, d, coords)
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in data.rows() {
        // `{:?}` prints the shortest representation that parses back exactly.
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_bin<R: Read>(mut reader: R) -> Result<Dataset> {
    let mut header = [0u8; 24];
    reader.read_exact(&mut header).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated pfls-bin header".into()),
        _ => Error::Io(e),
    })?;
    if &header[0..4] != BIN_MAGIC {
        return Err(Error::Format("bad magic, expected PFLS".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != BIN_VERSION {
        return Err(Error::Format(format!(
            "unsupported pfls-bin version {version}"
        )));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let len = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format(format!("header {n}x{d} overflows")))?;
    let mut bytes = vec![0u8; len * 8];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("payload shorter than {n}x{d} floats")))?;
    let coords = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Dataset::from_flat(n, d, coords)
}

pub fn write_bin<W: Write>(data: &Dataset, mut writer: W) -> Result<()> {
    writer.write_all(BIN_MAGIC)?;
    writer.write_all(&BIN_VERSION.to_le_bytes())?;
    writer.write_all(&(data.n() as u64).to_le_bytes())?;
    writer.write_all(&(data.d() as u64).to_le_bytes())?;
    for v in data.as_flat() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}
