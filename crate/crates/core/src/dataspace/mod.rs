//! Dataset storage, inner-product providers and centering.
//!
//! Everything downstream (pivot frames, the index, the spectral estimators)
//! only ever talks to points through [`InnerProduct`], so the same code runs
//! in plain Euclidean space, in kernel spaces and on precomputed Gram
//! matrices.

mod center;
mod io;
mod provider;

pub use center::{Center, CenterSpec};
pub use io::{read_bin, read_csv, write_bin, write_csv, Format, BIN_MAGIC, BIN_VERSION};
pub use provider::{GramColumn, GramMatrix, InnerProduct, Kernel, PointRef};

use crate::error::{Error, Result};

/// A dense, row-major set of `n` points in `d` dimensions.
///
/// Point ids are the row indices `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    coords: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    /// Builds a dataset from a flat row-major buffer.
    pub fn from_flat(n: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Empty);
        }
        if coords.len() != n * d {
            return Err(Error::Format(format!(
                "expected {} coordinates for {n}x{d}, got {}",
                n * d,
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d + 1,
                col: pos % d + 1,
            });
        }
        Ok(Self { coords, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?;
        let d = first.as_ref().len();
        let mut coords = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), d, coords)
    }

    /// Loads a dataset from disk.
    pub fn load(path: impl AsRef<std::path::Path>, format: Format) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        match format {
            Format::Csv => read_csv(reader),
            Format::PflsBin => read_bin(reader),
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>, format: Format) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        match format {
            Format::Csv => write_csv(self, &mut writer)?,
            Format::PflsBin => write_bin(self, &mut writer)?,
        }
        std::io::Write::flush(&mut writer)?;
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Returns a new dataset holding the given rows, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            self.check_index(i)?;
            coords.extend_from_slice(self.row(i));
        }
        Self::from_flat(ids.len(), self.d, coords)
    }

    /// Coordinate-wise mean of all rows.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let inv = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                index: i,
                n: self.n,
            })
        }
    }
}
