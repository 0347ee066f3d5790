//! `ARSG` signal container.
//!
//! ```text
//! "ARSG1\n"
//! u32 dims, u32 extents[dims], u32 features, u32 dtype (0 = f32, 1 = f64)
//! values, little-endian, feature-major then row-major
//! ```

use std::io::{Read, Write};

use super::{DiscreteSignal, GridSpec};
use crate::error::{Error, Result};
use crate::real::{DType, Real};

pub const MAGIC: &[u8; 6] = b"ARSG1\n";

pub fn encode<T: Real>(signal: &DiscreteSignal<T>) -> Vec<u8> {
    let grid = signal.grid();
    let mut out = Vec::with_capacity(6 + 4 * (3 + grid.dims()) + signal.values().len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.dims() as u32).to_le_bytes());
    for &e in grid.extents() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    out.extend_from_slice(&(signal.features() as u32).to_le_bytes());
    out.extend_from_slice(&T::DTYPE.code().to_le_bytes());
    for &v in signal.values() {
        v.write_le(&mut out);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("truncated ARSG data at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

/// Header of an encoded signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub grid: GridSpec,
    pub features: usize,
    pub dtype: DType,
}

fn decode_header(cur: &mut Cursor<'_>) -> Result<Header> {
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("bad magic bytes, expected ARSG1".into()));
    }
    let dims = cur.u32()?;
    if !(1..=2).contains(&dims) {
        return Err(Error::Format(format!("unsupported dimension count {dims}")));
    }
    let extents = (0..dims).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
    let grid = GridSpec::new(extents).map_err(|e| Error::Format(e.to_string()))?;
    let features = cur.u32()?;
    let code = cur.u32()? as u32;
    let dtype = DType::from_code(code).ok_or_else(|| Error::Format(format!("unknown dtype code {code}")))?;
    Ok(Header { grid, features, dtype })
}

pub fn peek_header(bytes: &[u8]) -> Result<Header> {
    decode_header(&mut Cursor { bytes, pos: 0 })
}

/// Decodes a signal, converting from the stored width to `T`.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<DiscreteSignal<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    let header = decode_header(&mut cur)?;
    let count = header.features * header.grid.len();
    let raw = cur.take(count * header.dtype.size())?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after ARSG payload", bytes.len() - cur.pos)));
    }
    let values: Vec<T> = match header.dtype {
        DType::F32 => raw.chunks_exact(4).map(|c| T::of(f32::read_le(c) as f64)).collect(),
        DType::F64 => raw.chunks_exact(8).map(|c| T::of(f64::read_le(c))).collect(),
    };
    DiscreteSignal::new(header.grid, header.features, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write<T: Real>(mut w: impl Write, signal: &DiscreteSignal<T>) -> Result<()> {
    w.write_all(&encode(signal))?;
    Ok(())
}

pub fn read<T: Real>(mut r: impl Read) -> Result<DiscreteSignal<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let g = GridSpec::new(vec![2, 1]).unwrap();
        let s = DiscreteSignal::new(g, 1, vec![1.0f32, -2.0]).unwrap();
        let bytes = encode(&s);
        let mut expect = b"ARSG1\n".to_vec();
        for v in [2u32, 2, 1, 1, 0] {
            expect.extend_from_slice(&v.to_le_bytes());
        }
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expect);
        assert_eq!(decode::<f32>(&bytes).unwrap(), s);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(matches!(decode::<f64>(b"ARSX1\n"), Err(Error::Format(_))));
        let s = DiscreteSignal::<f64>::zeros(GridSpec::line(4).unwrap(), 1);
        let mut bytes = encode(&s);
        bytes.pop();
        assert!(matches!(decode::<f64>(&bytes), Err(Error::Format(_))));
        let mut bytes = encode(&s);
        bytes.push(0);
        assert!(matches!(decode::<f64>(&bytes), Err(Error::Format(_))));
        let mut bytes = encode(&s);
        bytes[6] = 3;
        assert!(matches!(decode::<f64>(&bytes), Err(Error::Format(_))));
    }
}
