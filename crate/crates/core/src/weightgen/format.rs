//! `TERN1` binary export and the plain-text inspection format.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     5  magic "TERN1"
//!      5     8  seed
//!     13     8  layer_tag
//!     21     8  rows
//!     29     8  cols
//!     37     8  generator id (0 stream, 1 hash, 2 structured)
//!     45     8  n (structured only, else 0)
//!     53     8  m (structured only, else 0)
//!     61     8  threshold (f64)
//!     69     .  rows * ceil(cols / 4) bytes of 2-bit codes
//! ```
//!
//! Codes are `00 = 0`, `01 = +1`, `11 = -1`, four per byte starting at the
//! least significant bits, each row padded to a whole byte.

use std::io::Write;

use super::{Generator, Ternary, WeightSpec};
use crate::linalg::DenseTernary;
use crate::{Error, Result};

pub const TERN1_MAGIC: &[u8; 5] = b"TERN1";
pub const TERN1_HEADER_LEN: usize = 69;

#[inline]
fn code(v: Ternary) -> u8 {
    match v {
        Ternary::Zero => 0b00,
        Ternary::Pos => 0b01,
        Ternary::Neg => 0b11,
    }
}

fn row_bytes(cols: usize) -> usize {
    cols.div_ceil(4)
}

pub fn write_tern1<W: Write>(out: &mut W, spec: &WeightSpec, matrix: &DenseTernary) -> Result<()> {
    if (spec.rows, spec.cols) != (matrix.rows(), matrix.cols()) {
        return Err(Error::shape(format!(
            "spec is {}x{} but matrix is {}x{}",
            spec.rows,
            spec.cols,
            matrix.rows(),
            matrix.cols()
        )));
    }
    let (n, m) = spec.generator.n_of_m();
    let mut buf = Vec::with_capacity(TERN1_HEADER_LEN + spec.rows * row_bytes(spec.cols));
    buf.extend_from_slice(TERN1_MAGIC);
    for field in [
        spec.seed,
        spec.layer_tag,
        spec.rows as u64,
        spec.cols as u64,
        spec.generator.id(),
        n as u64,
        m as u64,
    ] {
        buf.extend_from_slice(&field.to_le_bytes());
    }
    buf.extend_from_slice(&spec.threshold.to_le_bytes());
    for r in 0..matrix.rows() {
        for quad in matrix.row(r).chunks(4) {
            let byte = quad
                .iter()
                .enumerate()
                .fold(0u8, |acc, (j, &v)| acc | (code(v) << (2 * j)));
            buf.push(byte);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                reason: format!("file truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn violation(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, reason: reason.into() }
}

/// Parses a `TERN1` file. Errors carry the offset of the first violation.
pub fn read_tern1(bytes: &[u8]) -> Result<(WeightSpec, DenseTernary)> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(5, "magic")?;
    if magic != TERN1_MAGIC {
        let bad = magic.iter().zip(TERN1_MAGIC).position(|(a, b)| a != b).unwrap_or(0);
        return Err(violation(bad, "bad magic, expected \"TERN1\""));
    }
    let seed = cur.u64("seed")?;
    let layer_tag = cur.u64("layer_tag")?;
    let rows_at = cur.pos;
    let rows = cur.u64("rows")?;
    let cols_at = cur.pos;
    let cols = cur.u64("cols")?;
    let gen_at = cur.pos;
    let gen_id = cur.u64("generator id")?;
    let n_at = cur.pos;
    let n = cur.u64("n")?;
    let m = cur.u64("m")?;
    let t_at = cur.pos;
    let threshold = f64::from_le_bytes(cur.take(8, "threshold")?.try_into().unwrap());

    if rows == 0 || rows > u32::MAX as u64 {
        return Err(violation(rows_at, format!("row count {rows} out of range")));
    }
    if cols == 0 || cols > u32::MAX as u64 {
        return Err(violation(cols_at, format!("column count {cols} out of range")));
    }
    let generator = match gen_id {
        0 => Generator::SequentialStream,
        1 => Generator::CoordinateHash,
        2 => Generator::StructuredNofM { n: n as usize, m: m as usize },
        other => return Err(violation(gen_at, format!("unknown generator id {other}"))),
    };
    if gen_id != 2 && (n != 0 || m != 0) {
        return Err(violation(n_at, "n and m must be zero for unstructured generators"));
    }
    let spec = WeightSpec {
        seed,
        layer_tag,
        rows: rows as usize,
        cols: cols as usize,
        threshold,
        generator,
    };
    if !(0.0..=1.0).contains(&threshold) {
        return Err(violation(t_at, format!("threshold {threshold} outside [0, 1]")));
    }
    spec.validate().map_err(|e| violation(n_at, e.to_string()))?;

    let stride = row_bytes(spec.cols);
    let body = spec.rows.checked_mul(stride).ok_or_else(|| violation(rows_at, "matrix too large"))?;
    let start = cur.pos;
    let data = cur.take(body, "matrix entries")?;
    let mut entries = Vec::with_capacity(spec.len());
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let at = r * stride + c / 4;
            let bits = (data[at] >> (2 * (c % 4))) & 0b11;
            entries.push(match bits {
                0b00 => Ternary::Zero,
                0b01 => Ternary::Pos,
                0b11 => Ternary::Neg,
                _ => return Err(violation(start + at, format!("invalid code 0b10 for entry ({r}, {c})"))),
            });
        }
        let used = spec.cols % 4;
        if used != 0 && data[r * stride + stride - 1] >> (2 * used) != 0 {
            return Err(violation(start + r * stride + stride - 1, "nonzero row padding"));
        }
    }
    if cur.pos != bytes.len() {
        return Err(violation(cur.pos, "trailing bytes after matrix"));
    }
    let matrix = DenseTernary::from_entries(spec.rows, spec.cols, entries)?;
    Ok((spec, matrix))
}

/// One line per row of `-`, `0` and `+`.
pub fn write_text<W: Write>(out: &mut W, matrix: &DenseTernary) -> Result<()> {
    let mut line = String::with_capacity(matrix.cols() + 1);
    for r in 0..matrix.rows() {
        line.clear();
        line.extend(matrix.row(r).iter().map(|v| v.symbol()));
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}
