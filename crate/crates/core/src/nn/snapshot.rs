//! Versioned, checksummed parameter snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RTSW" | elem_bytes: u8 | version: u64 | count: u32
//! count x ( name_len: u32 | name | rank: u32 | dims: u64 * rank | payload )
//! checksum: u64
//! ```
//!
//! The checksum covers every byte before it.

use std::sync::Arc;

use super::params::ParamSet;
use super::tensor::{Real, Tensor};
use super::NnError;

const MAGIC: &[u8; 4] = b"RTSW";
const HEADER: usize = 4 + 1 + 8 + 4;

/// FNV-1a over 8-byte little-endian words (the tail zero-padded), with the
/// length folded in last. Each round is a bijection of the running state, so
/// changing any one word always changes the result.
pub fn checksum(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = (h ^ u64::from_le_bytes(word)).wrapping_mul(PRIME);
    }
    (h ^ bytes.len() as u64).wrapping_mul(PRIME)
}

/// Immutable serialized parameters. Cloning is cheap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSnapshot {
    version: u64,
    bytes: Arc<[u8]>,
}

impl WeightSnapshot {
    pub fn encode<T: Real>(params: &ParamSet<T>, version: u64) -> Self {
        let payload: usize = params.iter().map(|(n, t)| 8 + n.len() + 8 * t.shape().len() + T::BYTES * t.len()).sum();
        let mut out = Vec::with_capacity(HEADER + payload + 8);
        out.extend_from_slice(MAGIC);
        out.push(T::BYTES as u8);
        out.extend_from_slice(&version.to_le_bytes());
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (name, t) in params.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Self {
            version,
            bytes: out.into(),
        }
    }

    /// Parses and verifies raw bytes.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, NnError> {
        let snap = Self::from_bytes_unchecked(bytes)?;
        snap.verify()?;
        Ok(snap)
    }

    /// Reads the version without checking the checksum. Used to inject
    /// corrupted snapshots in fault tests.
    pub fn from_bytes_unchecked(bytes: Vec<u8>) -> Result<Self, NnError> {
        if bytes.len() < HEADER + 8 || &bytes[..4] != MAGIC {
            return Err(NnError::Corrupt("bad magic or truncated header".into()));
        }
        let version = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        Ok(Self {
            version,
            bytes: bytes.into(),
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn verify(&self) -> Result<(), NnError> {
        let n = self.bytes.len();
        if n < HEADER + 8 {
            return Err(NnError::Corrupt("truncated".into()));
        }
        let stored = u64::from_le_bytes(self.bytes[n - 8..].try_into().unwrap());
        let actual = checksum(&self.bytes[..n - 8]);
        if stored != actual {
            return Err(NnError::Corrupt(format!(
                "checksum mismatch: stored {stored:#018x}, computed {actual:#018x}"
            )));
        }
        Ok(())
    }

    pub fn restore<T: Real>(&self) -> Result<ParamSet<T>, NnError> {
        self.verify()?;
        let b = &self.bytes[..self.bytes.len() - 8];
        if &b[..4] != MAGIC {
            return Err(NnError::Corrupt("bad magic".into()));
        }
        if b[4] as usize != T::BYTES {
            return Err(NnError::Corrupt(format!(
                "snapshot stores {}-byte floats, restore requested {}",
                b[4],
                T::BYTES
            )));
        }
        let mut r = Reader { b, pos: HEADER };
        let count = u32::from_le_bytes(b[13..17].try_into().unwrap());
        let mut params = ParamSet::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| NnError::Corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(T::BYTES).ok_or_else(|| NnError::Corrupt("size overflow".into()))?)?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            params.insert(name, Tensor::from_vec(&shape, data))?;
        }
        if r.pos != b.len() {
            return Err(NnError::Corrupt("trailing bytes".into()));
        }
        Ok(params)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| NnError::Corrupt("truncated tensor".into()))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> ParamSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = ParamSet::new();
        p.add_conv(&mut rng, "enc.c0", 3, 2, 3).unwrap();
        p.add_linear(&mut rng, "q1.l0", 5, 3).unwrap();
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = sample();
        let s = WeightSnapshot::encode(&p, 7);
        assert_eq!(s.version(), 7);
        let back: ParamSet<f32> = s.restore().unwrap();
        assert_eq!(back, p);
        let again = WeightSnapshot::from_bytes(s.as_bytes().to_vec()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn header_layout() {
        let s = WeightSnapshot::encode(&sample(), 0x0102);
        let b = s.as_bytes();
        assert_eq!(&b[..4], b"RTSW");
        assert_eq!(b[4], 4);
        assert_eq!(&b[5..13], &[2, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[13..17], &[4, 0, 0, 0]);
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let s = WeightSnapshot::encode(&sample(), 3);
        let bytes = s.as_bytes().to_vec();
        for i in 0..bytes.len() {
            for flip in [0x01u8, 0x80, 0xff] {
                let mut bad = bytes.clone();
                bad[i] ^= flip;
                let rejected = match WeightSnapshot::from_bytes_unchecked(bad) {
                    Err(_) => true,
                    Ok(snap) => snap.restore::<f32>().is_err(),
                };
                assert!(rejected, "flip {flip:#x} at byte {i} went unnoticed");
            }
        }
    }

    #[test]
    fn precision_mismatch_is_an_error() {
        let s = WeightSnapshot::encode(&sample(), 1);
        assert!(s.restore::<f64>().is_err());
    }
}
