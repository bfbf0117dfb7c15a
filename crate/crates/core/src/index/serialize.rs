//! Versioned binary container for a built index.
//!
//! All integers are little-endian `u64` unless noted, all floats
//! little-endian IEEE-754 `f64`. Layout, in order:
//!
//! ```text
//! magic            8 bytes  "PFLSIDX\0"
//! version          u32      = 1
//! seed             u64
//! k_requested      u64
//! provider tag     u8       0 dot | 1 rbf | 2 poly | 3 gram
//!   rbf:           gamma f64
//!   poly:          degree u32, offset f64
//!   gram:          n u64, n*n f64 row-major
//! center spec tag  u8       0 none | 1 mean | 2 point | 3 explicit
//!   point:         index u64
//!   explicit:      len u64, len f64
//! center repr tag  u8       0 zero | 1 vector | 2 row | 3 averaged
//!   vector:        len u64, len f64
//!   row:           index u64
//! <c, c>           f64
//! dataset          n u64, d u64, n*d f64 row-major
//! <c, x_i>         n f64
//! k                u64
//! pivot ids        k u64
//! tri table        k(k-1)/2 f64, packed rows of the lower triangle
//! denominators     k f64
//! point coeffs     n*k f64 row-major
//! point residuals  n f64
//! |x - c|^2        n f64
//! <x, x>           n f64
//! discards         count u64, then (id u64, relative residual f64) each
//! ```
//!
//! Writing a freshly read index reproduces the input bytes exactly.

use std::io::{Read, Write};
use std::sync::Arc;

use super::PflsIndex;
use crate::dataspace::{Center, CenterSpec, Dataset, GramMatrix, InnerProduct, Kernel};
use crate::error::{Error, Result};
use crate::pivotframe::{Discard, PivotFrame};

pub const INDEX_MAGIC: &[u8; 8] = b"PFLSIDX\0";
pub const INDEX_VERSION: u32 = 1;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn usize(&mut self, v: usize) -> Result<()> {
        self.u64(v as u64)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        vs.iter().try_for_each(|&v| self.f64(v))
    }
    fn vec(&mut self, vs: &[f64]) -> Result<()> {
        self.usize(vs.len())?;
        self.f64s(vs)
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated index file".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} does not fit in memory")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        // Cap the up-front allocation so a corrupt length fails on read, not
        // on allocation.
        let mut out = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }
    fn vec(&mut self) -> Result<Vec<f64>> {
        let len = self.usize()?;
        self.f64s(len)
    }
}

pub(super) fn write_index<W: Write>(index: &PflsIndex, w: W) -> Result<()> {
    let mut out = Out(w);
    out.bytes(INDEX_MAGIC)?;
    out.u32(INDEX_VERSION)?;
    out.u64(index.seed)?;
    out.usize(index.k_requested)?;

    match (index.provider.as_kernel(), index.provider.as_gram()) {
        (Some(Kernel::Dot), _) => out.u8(0)?,
        (Some(Kernel::Rbf { gamma }), _) => {
            out.u8(1)?;
            out.f64(*gamma)?;
        }
        (Some(Kernel::Polynomial { degree, offset }), _) => {
            out.u8(2)?;
            out.u32(*degree)?;
            out.f64(*offset)?;
        }
        (None, Some(g)) => {
            out.u8(3)?;
            out.usize(g.n())?;
            out.f64s(g.as_flat())?;
        }
        (None, None) => unreachable!("provider is either a kernel or a gram matrix"),
    }

    match &index.center_spec {
        CenterSpec::None => out.u8(0)?,
        CenterSpec::Mean => out.u8(1)?,
        CenterSpec::Point(i) => {
            out.u8(2)?;
            out.usize(*i)?;
        }
        CenterSpec::Explicit(v) => {
            out.u8(3)?;
            out.vec(v)?;
        }
    }

    let frame = &index.frame;
    let center = frame.center();
    match center.parts() {
        (Some(v), _, _) => {
            out.u8(1)?;
            out.vec(v)?;
        }
        (None, Some(i), _) => {
            out.u8(2)?;
            out.usize(i)?;
        }
        (None, None, true) => out.u8(3)?,
        (None, None, false) => out.u8(0)?,
    }
    out.f64(center.cc())?;

    let data = &index.data;
    out.usize(data.n())?;
    out.usize(data.d())?;
    out.f64s(data.as_flat())?;
    out.f64s(center.row_terms())?;

    out.usize(frame.k())?;
    for &id in &frame.pivot_ids {
        out.usize(id)?;
    }
    out.f64s(&frame.tri)?;
    out.f64s(&frame.denoms)?;
    out.f64s(&frame.point_coeffs)?;
    out.f64s(&frame.point_res)?;
    out.f64s(&frame.point_sqnorm_c)?;
    out.f64s(&frame.point_self_ip)?;
    out.usize(frame.discarded.len())?;
    for d in &frame.discarded {
        out.usize(d.id)?;
        out.f64(d.relative_residual)?;
    }
    Ok(())
}

pub(super) fn read_index<R: Read>(r: R) -> Result<PflsIndex> {
    let mut inp = In(r);
    if &inp.bytes::<8>()? != INDEX_MAGIC {
        return Err(Error::Format("not a pfls index file".into()));
    }
    let version = inp.u32()?;
    if version != INDEX_VERSION {
        return Err(Error::Format(format!(
            "unsupported index version {version}"
        )));
    }
    let seed = inp.u64()?;
    let k_requested = inp.usize()?;

    let provider = match inp.u8()? {
        0 => InnerProduct::dot(),
        1 => InnerProduct::kernel(Kernel::Rbf { gamma: inp.f64()? })?,
        2 => {
            let degree = inp.u32()?;
            let offset = inp.f64()?;
            InnerProduct::kernel(Kernel::Polynomial { degree, offset })?
        }
        3 => {
            let n = inp.usize()?;
            let values = inp.f64s(
                n.checked_mul(n)
                    .ok_or_else(|| Error::Format("gram size overflows".into()))?,
            )?;
            InnerProduct::gram(GramMatrix::new(n, values)?)
        }
        t => return Err(Error::Format(format!("unknown provider tag {t}"))),
    };

    let center_spec = match inp.u8()? {
        0 => CenterSpec::None,
        1 => CenterSpec::Mean,
        2 => CenterSpec::Point(inp.usize()?),
        3 => CenterSpec::Explicit(inp.vec()?),
        t => return Err(Error::Format(format!("unknown center tag {t}"))),
    };

    let (vector, row, averaged) = match inp.u8()? {
        0 => (None, None, false),
        1 => (Some(inp.vec()?), None, false),
        2 => (None, Some(inp.usize()?), false),
        3 => (None, None, true),
        t => return Err(Error::Format(format!("unknown center repr tag {t}"))),
    };
    let cc = inp.f64()?;

    let n = inp.usize()?;
    let d = inp.usize()?;
    let coords = inp.f64s(
        n.checked_mul(d)
            .ok_or_else(|| Error::Format("dataset size overflows".into()))?,
    )?;
    let data = Dataset::from_flat(n, d, coords)?;
    let row_terms = inp.f64s(n)?;
    let center = Center::from_parts(center_spec.clone(), vector, row, averaged, cc, row_terms);

    let k = inp.usize()?;
    if k > n {
        return Err(Error::Format(format!("{k} pivots for {n} points")));
    }
    let pivot_ids = (0..k)
        .map(|_| {
            let id = inp.usize()?;
            data.check_index(id).map(|_| id)
        })
        .collect::<Result<Vec<_>>>()?;
    let tri = inp.f64s(k * k.saturating_sub(1) / 2)?;
    let denoms = inp.f64s(k)?;
    let point_coeffs = inp.f64s(n * k)?;
    let point_res = inp.f64s(n)?;
    let point_sqnorm_c = inp.f64s(n)?;
    let point_self_ip = inp.f64s(n)?;
    let discards = inp.usize()?;
    let discarded = (0..discards)
        .map(|_| {
            Ok(Discard {
                id: inp.usize()?,
                relative_residual: inp.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trailing = [0u8; 1];
    if inp.0.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after index".into()));
    }
    if let Some(g) = provider.as_gram() {
        if g.n() != n {
            return Err(Error::Format(
                "gram matrix does not match dataset size".into(),
            ));
        }
    }

    let frame = PivotFrame {
        pivot_ids,
        center,
        tri,
        denoms,
        n,
        point_coeffs,
        point_res,
        point_sqnorm_c,
        point_self_ip,
        discarded,
    };
    Ok(PflsIndex {
        data: Arc::new(data),
        provider: Arc::new(provider),
        frame,
        k_requested,
        seed,
        center_spec,
    })
}
