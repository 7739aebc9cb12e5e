//! Named-tensor container with a trailing CRC32.
//!
//! Layout (little-endian): 8-byte magic `CWTS0001`, `u32` tensor count, then
//! per tensor `u16` name length, UTF-8 name, `u8` dtype (0 = f32, 1 = f64),
//! `u8` rank and `u64` dims; then the raw payloads in manifest order; then a
//! `u32` CRC32 of everything before it.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CWTS0001";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dtype: DType::F64,
            shape,
            data,
        }
    }

    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }
}

pub fn encode(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&u32::try_from(tensors.len()).map_err(|_| too_many())?.to_le_bytes());
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(Error::Dimension(format!(
                "tensor {}: {} values for shape {:?}",
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        let name = t.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {}", t.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.dtype.code());
        out.push(u8::try_from(t.shape.len()).map_err(|_| Error::Format(format!("rank too high: {}", t.name)))?);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for t in tensors {
        match t.dtype {
            DType::F32 => t
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            DType::F64 => t.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn too_many() -> Error {
    Error::Format("too many tensors".into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format("container manifest runs past the payload".into())),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad weight container magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut cur = Cursor { buf: body, pos: 8 };
    let count = cur.u32()? as usize;
    let mut manifest = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_owned();
        let dtype = match cur.u8()? {
            0 => DType::F32,
            1 => DType::F64,
            other => return Err(Error::Format(format!("tensor {name}: unknown dtype {other}"))),
        };
        let rank = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(cur.u64()?).map_err(|_| Error::Format("dimension overflow".into()))?);
        }
        manifest.push((name, dtype, shape));
    }
    let mut out = Vec::with_capacity(manifest.len());
    for (name, dtype, shape) in manifest {
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("tensor {name}: size overflow")))?;
        let raw = cur.take(
            n.checked_mul(dtype.width())
                .ok_or_else(|| Error::Format("size overflow".into()))?,
        )?;
        let data = match dtype {
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        };
        out.push(NamedTensor {
            name,
            dtype,
            shape,
            data,
        });
    }
    if cur.pos != body.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last tensor",
            body.len() - cur.pos
        )));
    }
    Ok(out)
}

pub fn write_container(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = encode(tensors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor::new("a", vec![2, 3], vec![1.0, -2.5, 3.25, 0.1, f64::MIN_POSITIVE, 7.0]),
            NamedTensor::new("b.scalar", vec![], vec![0.5]).with_dtype(DType::F32),
        ]
    }

    #[test]
    fn round_trip() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(decode(&bytes).unwrap(), sample());
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = encode(&sample()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = encode(&sample()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 9, 13, 3] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(Error::Checksum { .. })),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn shape_must_match_data() {
        assert!(encode(&[NamedTensor::new("x", vec![2, 2], vec![1.0])]).is_err());
    }
}
