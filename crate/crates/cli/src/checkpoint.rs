//! Checkpoint container: version, configuration fingerprint, the
//! configuration text, string metadata and named `f32` tensors.
//!
//! Layout (little-endian): `"IIDC"`, `u32` version, 32-byte fingerprint,
//! `u32`-length-prefixed config text, `u32` metadata count of
//! length-prefixed key/value pairs, `u32` tensor count, and per tensor a
//! length-prefixed name, `u32` rank, `u64` dims and the raw samples.

use std::path::Path;

use iidm_core::numerics::{ParamStore, Tensor};
use iidm_core::{Error, Result};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"IIDC";
pub const VERSION: u32 = 1;

/// SHA-256 of a configuration's canonical text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn of(text: &str) -> Self {
        Self(Sha256::digest(text.as_bytes()).into())
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: Fingerprint,
    pub config: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(format_err(format!("checkpoint truncated at byte {}", self.at)));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| format_err("checkpoint string is not UTF-8"))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let n = u32::try_from(s.len()).map_err(|_| format_err("string too long for a checkpoint"))?;
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn count(n: usize) -> Result<[u8; 4]> {
    Ok(u32::try_from(n).map_err(|_| format_err("count too large for a checkpoint"))?.to_le_bytes())
}

impl Checkpoint {
    pub fn new(config: &str) -> Self {
        Self { fingerprint: Fingerprint::of(config), config: config.to_string(), meta: Vec::new(), tensors: Vec::new() }
    }

    /// Appends every parameter of `store` under `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for p in store.iter() {
            self.tensors.push((format!("{prefix}{}", p.name), p.value.clone()));
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Overwrites every parameter of `store` from `prefix`-named tensors.
    pub fn restore_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
        for name in names {
            let key = format!("{prefix}{name}");
            let t = self
                .tensor(&key)
                .ok_or_else(|| format_err(format!("checkpoint has no tensor {key:?}")))?;
            store.set(&name, t.clone())?;
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.0);
        put_str(&mut out, &self.config)?;
        out.extend_from_slice(&count(self.meta.len())?);
        for (k, v) in &self.meta {
            put_str(&mut out, k)?;
            put_str(&mut out, v)?;
        }
        out.extend_from_slice(&count(self.tensors.len())?);
        for (name, t) in &self.tensors {
            put_str(&mut out, name)?;
            out.extend_from_slice(&count(t.shape().len())?);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(format_err("missing checkpoint magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported checkpoint version {version}")));
        }
        let fingerprint = Fingerprint(r.take(32)?.try_into().expect("32 bytes"));
        let config = r.string()?;
        let n_meta = r.u32()? as usize;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            meta.push((r.string()?, r.string()?));
        }
        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            if rank > r.remaining() / 8 {
                return Err(format_err(format!("tensor {name:?} rank {rank} exceeds the file")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut numel: u64 = 1;
            for _ in 0..rank {
                let d = r.u64()?;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| format_err(format!("tensor {name:?} size overflows")))?;
                shape.push(usize::try_from(d).map_err(|_| format_err("tensor dim too large"))?);
            }
            if numel == 0 || numel > (r.remaining() / 4) as u64 {
                return Err(format_err(format!("tensor {name:?} with {numel} values exceeds the file")));
            }
            let data: Vec<f32> = r
                .take(numel as usize * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(format_err(format!("{} trailing bytes after checkpoint", r.remaining())));
        }
        Ok(Self { fingerprint, config, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    /// Loads a checkpoint; a fingerprint other than `expected` is logged
    /// as a warning and reported in the second value.
    pub fn load(path: &Path, expected: Option<&Fingerprint>) -> Result<(Self, bool)> {
        let bytes = std::fs::read(path)?;
        let ckpt = Self::decode(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))?;
        let mismatch = expected.is_some_and(|f| *f != ckpt.fingerprint);
        if mismatch {
            log::warn!(
                "{}: configuration fingerprint {} differs from the current configuration; loading anyway",
                path.display(),
                ckpt.fingerprint.hex()
            );
        }
        Ok((ckpt, mismatch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new("seed = 1\n");
        c.meta.push(("step".into(), "7".into()));
        c.tensors.push(("a.w".into(), Tensor::new(vec![2, 1], vec![1.5, f32::NAN]).unwrap()));
        c.tensors.push(("s".into(), Tensor::scalar(-0.0)));
        c
    }

    #[test]
    fn round_trip_bytes() {
        let b = sample().encode().unwrap();
        let back = Checkpoint::decode(&b).unwrap();
        assert_eq!(back.encode().unwrap(), b);
        assert_eq!(back.meta("step"), Some("7"));
    }

    #[test]
    fn truncation_and_trailing_rejected() {
        let b = sample().encode().unwrap();
        for cut in [0, 3, 10, b.len() - 1] {
            assert!(Checkpoint::decode(&b[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = b;
        extra.push(1);
        assert!(Checkpoint::decode(&extra).is_err());
    }

    #[test]
    fn fingerprint_is_content_hash() {
        assert_eq!(Fingerprint::of("a"), Fingerprint::of("a"));
        assert_ne!(Fingerprint::of("a"), Fingerprint::of("b"));
        assert_eq!(Fingerprint::of("").hex().len(), 64);
    }
}
