//! DKCP checkpoints: named f64 tensors in a little-endian binary container.
//!
//! Layout: `b"DKCP"`, u32 version, u32 tensor count, then per tensor a u32
//! name length, the UTF-8 name, a u32 rank, `rank` u32 dims and the f64
//! payload.

use std::path::Path;

use thiserror::Error;

use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"DKCP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a DKCP checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("tensor name is not UTF-8")]
    BadName,
    #[error("tensor '{0}' has an invalid shape")]
    BadShape(String),
    #[error("missing tensor '{0}'")]
    Missing(String),
    #[error("tensor '{name}' has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(tensors: Vec<(String, Tensor)>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::BadName)?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let n = n.ok_or_else(|| CheckpointError::BadShape(name.clone()))?;
            let payload = r.take(n.checked_mul(8).ok_or_else(|| CheckpointError::BadShape(name.clone()))?)?;
            let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(shape, data).map_err(|_| CheckpointError::BadShape(name.clone()))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self { tensors })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.encode())
    }

    pub fn read(path: &Path) -> crate::Result<Self> {
        Ok(Self::decode(&std::fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint::new(vec![
            ("a".into(), Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap()),
            ("bias".into(), Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()),
        ])
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = sample().encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        for ((n1, t1), (n2, t2)) in sample().tensors.iter().zip(&back.tensors) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert_eq!(Checkpoint::decode(b"NOPE"), Err(CheckpointError::BadMagic));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert_eq!(Checkpoint::decode(&v2), Err(CheckpointError::UnsupportedVersion(2)));
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated(_))));
        let mut extra = bytes;
        extra.push(0);
        assert_eq!(Checkpoint::decode(&extra), Err(CheckpointError::TrailingBytes(1)));
    }
}
