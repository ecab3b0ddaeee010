//! `NIDM` checkpoint files.
//!
//! Layout (little-endian): magic `NIDM`, u16 version, u8 kind, u16 hidden,
//! u16 d, u8 slots, u8 tied, f64 input divisor, then tensors until end of
//! file as (u16 name length, name, u32 rows, u32 cols, rows*cols f64).
//! Metadata rides along as empty tensors named `meta:<key>=<value>`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, EstimatorKind, EstimatorParams};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NIDM";
pub const CHECKPOINT_VERSION: u16 = 1;
const META_PREFIX: &str = "meta:";

/// Parameters together with their `key = value` metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: EstimatorParams<T>,
    pub metadata: Vec<(String, String)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: EstimatorParams<T>) -> Self {
        Checkpoint {
            params,
            metadata: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.push((key.into(), value.into()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = &self.params.config;
        let narrow = |v: usize, what: &str| u16::try_from(v).map_err(|_| Error::Param(format!("{what} {v} does not fit the checkpoint header")));
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(cfg.kind.code());
        out.extend_from_slice(&narrow(cfg.hidden, "hidden size")?.to_le_bytes());
        out.extend_from_slice(&narrow(cfg.d, "patch side")?.to_le_bytes());
        out.push(u8::try_from(cfg.slots).map_err(|_| Error::Param("too many context slots".into()))?);
        out.push(u8::from(cfg.tied));
        out.extend_from_slice(&cfg.input_divisor.to_le_bytes());
        let mut put = |name: &str, m: Option<&Matrix<T>>| -> Result<()> {
            out.extend_from_slice(&narrow(name.len(), "tensor name length")?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            let (r, c) = m.map_or((0, 0), |m| m.shape());
            out.extend_from_slice(&(r as u32).to_le_bytes());
            out.extend_from_slice(&(c as u32).to_le_bytes());
            if let Some(m) = m {
                for &v in m.as_slice() {
                    out.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
            Ok(())
        };
        for (k, v) in &self.metadata {
            if k.contains('=') {
                return Err(Error::Param(format!("metadata key '{k}' may not contain '='")));
            }
            put(&format!("{META_PREFIX}{k}={v}"), None)?;
        }
        for (name, m) in self.params.tensors() {
            put(&name, Some(m))?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::data_at("not a checkpoint (bad magic)", 0));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::data_at(
                format!("checkpoint version mismatch: expected {CHECKPOINT_VERSION}, found {version}"),
                4,
            ));
        }
        let kind_at = r.pos;
        let kind = EstimatorKind::from_code(r.u8()?).map_err(|e| Error::data_at(e.to_string(), kind_at))?;
        let hidden = r.u16()? as usize;
        let d = r.u16()? as usize;
        let slots = r.u8()? as usize;
        let tied_at = r.pos;
        let tied = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::data_at(format!("tied flag must be 0 or 1, found {other}"), tied_at)),
        };
        let divisor = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let config = EstimatorConfig {
            kind,
            hidden,
            d,
            slots,
            tied,
            input_divisor: divisor,
        };
        config.validate().map_err(|e| Error::data_at(format!("invalid header: {e}"), 4))?;
        let mut params = EstimatorParams::<T>::zeros(config)?;
        let mut seen = vec![false; params.tensors().len()];
        let mut metadata = Vec::new();
        while r.pos < bytes.len() {
            let at = r.pos;
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::data_at("tensor name is not UTF-8", at))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if let Some(meta) = name.strip_prefix(META_PREFIX) {
                if rows != 0 || cols != 0 {
                    return Err(Error::data_at(format!("metadata entry '{meta}' carries data"), at));
                }
                let (k, v) = meta.split_once('=').unwrap_or((meta, ""));
                metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            let mut slots = params.tensors_mut();
            let ix = slots
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::data_at(format!("unexpected tensor '{name}' for a {kind} checkpoint"), at))?;
            if seen[ix] {
                return Err(Error::data_at(format!("tensor '{name}' appears twice"), at));
            }
            seen[ix] = true;
            let target = &mut slots[ix].1;
            if target.shape() != (rows, cols) {
                return Err(Error::data_at(
                    format!("tensor '{name}' is {rows}x{cols}, expected {}x{}", target.rows(), target.cols()),
                    at,
                ));
            }
            let raw = r.take(rows * cols * 8)?;
            for (dst, chunk) in target.as_mut_slice().iter_mut().zip(raw.chunks_exact(8)) {
                *dst = T::of(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::data(format!("checkpoint is missing tensor '{}'", params.tensors()[missing].0)));
        }
        Ok(Checkpoint { params, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::data_at(format!("truncated checkpoint: wanted {n} more bytes"), self.pos));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
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
}
