//! CNVF value-field files: `"CNVF"`, version `u16`, dimension count `u8`,
//! then per axis `count u32, lower f64, upper f64, periodic u8`, then the
//! values as little-endian `f32`, row-major with the last axis fastest.

use std::io::{Read, Write};
use std::path::Path;

use cncbf_core::grid::{Axis, GridSpec, DIMS};
use cncbf_core::hj::ValueField;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"CNVF";
pub const VERSION: u16 = 1;

pub fn encode(field: &ValueField) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + DIMS * 21 + 4 * field.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DIMS as u8);
    for a in &field.spec.axes {
        out.extend_from_slice(&(a.count as u32).to_le_bytes());
        out.extend_from_slice(&a.lower.to_le_bytes());
        out.extend_from_slice(&a.upper.to_le_bytes());
        out.push(a.periodic as u8);
    }
    for v in &field.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let b = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        b.try_into().ok()
    }
}

/// Decodes a CNVF buffer. The returned field is marked converged; the
/// solver report travels separately.
pub fn decode(bytes: &[u8], path: &Path) -> CliResult<ValueField> {
    let bad = |reason: &str| CliError::format(path, reason);
    let mut c = Cursor { bytes, pos: 0 };
    if c.take::<4>().as_ref() != Some(MAGIC) {
        return Err(bad("missing CNVF magic"));
    }
    let version = u16::from_le_bytes(c.take().ok_or_else(|| bad("truncated header"))?);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let [dims] = c.take::<1>().ok_or_else(|| bad("truncated header"))?;
    if dims as usize != DIMS {
        return Err(bad(&format!("expected {DIMS} dimensions, found {dims}")));
    }
    let mut axes = [Axis::new(2, 0.0, 1.0, false); DIMS];
    for axis in axes.iter_mut() {
        let count = u32::from_le_bytes(c.take().ok_or_else(|| bad("truncated axis"))?) as usize;
        let lower = f64::from_le_bytes(c.take().ok_or_else(|| bad("truncated axis"))?);
        let upper = f64::from_le_bytes(c.take().ok_or_else(|| bad("truncated axis"))?);
        let [periodic] = c.take::<1>().ok_or_else(|| bad("truncated axis"))?;
        if periodic > 1 {
            return Err(bad("periodic flag must be 0 or 1"));
        }
        *axis = Axis::new(count, lower, upper, periodic == 1);
    }
    let spec = GridSpec::new(axes).map_err(|e| bad(&e.to_string()))?;
    let body = &bytes[c.pos..];
    if body.len() != 4 * spec.len() {
        return Err(bad(&format!("expected {} values, found {} bytes", spec.len(), body.len())));
    }
    let values = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    Ok(ValueField { spec, values, iteration_count: 0, converged: true })
}

pub fn write(path: &Path, field: &ValueField) -> CliResult<()> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&encode(field)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> CliResult<ValueField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn field() -> ValueField {
        let spec = GridSpec::new([
            Axis::new(3, -1.0, 1.0, false),
            Axis::new(2, 0.0, 2.0, false),
            Axis::new(4, -std::f64::consts::PI, std::f64::consts::PI, true),
            Axis::new(2, 0.0, 1.5, false),
        ])
        .unwrap();
        let values = (0..spec.len()).map(|i| i as f64 * 0.25 - 3.0).collect();
        ValueField { spec, values, iteration_count: 7, converged: true }
    }

    #[test]
    fn header_layout() {
        let b = encode(&field());
        assert_eq!(&b[..4], b"CNVF");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], 4);
        assert_eq!(u32::from_le_bytes(b[7..11].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(b[11..19].try_into().unwrap()), -1.0);
        assert_eq!(b[27], 0);
        // third axis periodic flag
        assert_eq!(b[7 + 2 * 21 + 20], 1);
        assert_eq!(b.len(), 7 + 4 * 21 + 4 * 48);
    }

    #[test]
    fn round_trip_within_f32() {
        let f = field();
        let back = decode(&encode(&f), &PathBuf::from("mem")).unwrap();
        assert_eq!(back.spec, f.spec);
        for (a, b) in f.values.iter().zip(&back.values) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }

    #[test]
    fn rejects_corruption() {
        let p = PathBuf::from("mem");
        let mut b = encode(&field());
        assert!(decode(&b[..b.len() - 1], &p).is_err());
        assert!(decode(&b[..10], &p).is_err());
        b[0] = b'X';
        assert!(decode(&b, &p).is_err());
        let mut b = encode(&field());
        b[6] = 3;
        assert!(decode(&b, &p).is_err());
    }
}
