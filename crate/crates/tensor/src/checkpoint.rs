//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "RANCKPT1"            8-byte magic
//! u32 version = 1
//! u32 entry count
//! per entry:
//!   u32 name length, UTF-8 name bytes
//!   u32 rank, rank × u64 dims
//!   u32 dtype code (0 = f32, 1 = f64)
//!   raw little-endian element data
//! ```

use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"RANCKPT1";
pub const VERSION: u32 = 1;

/// Serialize a store to bytes. Optimizer state is not persisted.
pub fn encode<T: Scalar>(params: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&T::DTYPE.code().to_le_bytes());
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<V>(&self, reason: impl Into<String>) -> Result<V> {
        Err(TensorError::Format {
            offset: self.pos as u64,
            reason: reason.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.buf.len() => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            _ => self.fail(format!("truncated while reading {what}")),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parse a checkpoint. The stored dtype must match `T`.
pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<ParamStore<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        r.pos = 0;
        return r.fail("bad magic");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos -= 4;
        return r.fail(format!("unsupported version {version}"));
    }
    let count = r.u32("entry count")?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_at = r.pos;
        let len = r.u32("name length")? as usize;
        let name = match std::str::from_utf8(r.take(len, "name")?) {
            Ok(s) if !s.is_empty() => s.to_string(),
            _ => {
                r.pos = name_at;
                return r.fail("invalid entry name");
            }
        };
        if store.contains(&name) {
            r.pos = name_at;
            return r.fail(format!("duplicate entry {name:?}"));
        }
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            let d = r.u64("dims")?;
            if d == 0 || d > u32::MAX as u64 {
                r.pos -= 8;
                return r.fail(format!("invalid extent {d}"));
            }
            dims.push(d as usize);
        }
        let code = r.u32("dtype")?;
        match DType::from_code(code) {
            Some(dt) if dt == T::DTYPE => {}
            Some(dt) => {
                r.pos -= 4;
                return r.fail(format!("entry {name:?} has dtype {dt:?}, expected {:?}", T::DTYPE));
            }
            None => {
                r.pos -= 4;
                return r.fail(format!("unknown dtype code {code}"));
            }
        }
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let Some(nbytes) = n.and_then(|n| n.checked_mul(T::DTYPE.size())) else {
            return r.fail("entry size overflows");
        };
        let raw = r.take(nbytes, "data")?;
        let data = raw.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
        let t = Tensor::new(dims, data)?;
        store.insert(name, t)?;
    }
    if r.pos != bytes.len() {
        return r.fail("trailing bytes after last entry");
    }
    Ok(store)
}

pub fn save_checkpoint<T: Scalar>(params: &ParamStore<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ParamStore<T>> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.insert("restorator/conv/w", Tensor::from_fn(&[2, 1, 3, 3], |i| (i as f32).sin())).unwrap();
        s.insert("restorator/bn/running_var", Tensor::from_fn(&[2], |i| i as f32 + 0.5)).unwrap();
        s
    }

    #[test]
    fn round_trip_is_identity() {
        let s = sample();
        let bytes = encode(&s);
        let back: ParamStore<f32> = decode(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        for (k, t) in s.iter() {
            assert_eq!(back.get(k).unwrap(), t);
        }
    }

    #[test]
    fn empty_store_round_trip() {
        let bytes = encode(&ParamStore::<f32>::new());
        assert_eq!(bytes.len(), 16);
        assert!(decode::<f32>(&bytes).unwrap().is_empty());
    }

    #[test]
    fn corrupted_magic_reports_offset_zero() {
        let mut bytes = encode(&sample());
        bytes[0] ^= 0xff;
        assert_eq!(
            decode::<f32>(&bytes).unwrap_err(),
            TensorError::Format {
                offset: 0,
                reason: "bad magic".into()
            }
        );
    }

    #[test]
    fn truncation_and_dtype_mismatch_fail() {
        let bytes = encode(&sample());
        for cut in [4, 12, 20, bytes.len() - 1] {
            assert!(matches!(decode::<f32>(&bytes[..cut]), Err(TensorError::Format { .. })));
        }
        assert!(matches!(decode::<f64>(&bytes), Err(TensorError::Format { .. })));
    }
}
