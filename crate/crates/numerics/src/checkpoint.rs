//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//! magic "SDCK", u32 version, u8 precision bits, length-prefixed JSON meta,
//! parameter records (name, dims, raw data) in insertion order, then an
//! optional Adam block. Writing the same state twice yields identical bytes.

use std::collections::HashMap;
use std::path::Path;

use crate::adam::AdamState;
use crate::error::NumericsError;
use crate::params::Params;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Result;

const MAGIC: &[u8; 4] = b"SDCK";
const VERSION: u32 = 1;

pub struct Checkpoint<S: Scalar> {
    /// Opaque JSON blob describing the model (architecture name, dims, ...).
    pub meta: String,
    pub params: Params<S>,
    pub adam: Option<AdamState<S>>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(meta: String, params: Params<S>, adam: Option<AdamState<S>>) -> Self {
        Self { meta, params, adam }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(S::BITS);
        write_bytes(&mut out, self.meta.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, tensor) in self.params.iter() {
            write_bytes(&mut out, name.as_bytes());
            out.push(tensor.rank() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                v.write_le(&mut out);
            }
        }
        match &self.adam {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step().to_le_bytes());
                let entries: Vec<&str> = self
                    .params
                    .iter()
                    .map(|(n, _)| n)
                    .filter(|n| state.moment(n).is_some())
                    .collect();
                out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
                for name in entries {
                    let (m, v) = state.moment(name).expect("filtered above");
                    write_bytes(&mut out, name.as_bytes());
                    out.extend_from_slice(&(m.len() as u32).to_le_bytes());
                    for &x in m {
                        x.write_le(&mut out);
                    }
                    for &x in v {
                        x.write_le(&mut out);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(NumericsError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NumericsError::Checkpoint(format!("unsupported version {version}")));
        }
        let bits = r.u8()?;
        if bits != S::BITS {
            return Err(NumericsError::Checkpoint(format!(
                "precision mismatch: file has {bits}-bit values, expected {}",
                S::BITS
            )));
        }
        let meta = String::from_utf8(r.bytes_block()?.to_vec())
            .map_err(|_| NumericsError::Checkpoint("meta is not utf-8".into()))?;
        let count = r.u32()? as usize;
        let width = (S::BITS / 8) as usize;
        let mut params = Params::new();
        for _ in 0..count {
            let name = String::from_utf8(r.bytes_block()?.to_vec())
                .map_err(|_| NumericsError::Checkpoint("name is not utf-8".into()))?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * width)?;
            let data: Vec<S> = raw.chunks_exact(width).map(S::read_le).collect();
            params.insert(&name, Tensor::new(shape, data)?)?;
        }
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let entries = r.u32()? as usize;
                let mut moments = HashMap::with_capacity(entries);
                for _ in 0..entries {
                    let name = String::from_utf8(r.bytes_block()?.to_vec())
                        .map_err(|_| NumericsError::Checkpoint("name is not utf-8".into()))?;
                    let numel = r.u32()? as usize;
                    let m: Vec<S> =
                        r.take(numel * width)?.chunks_exact(width).map(S::read_le).collect();
                    let v: Vec<S> =
                        r.take(numel * width)?.chunks_exact(width).map(S::read_le).collect();
                    moments.insert(name, (m, v));
                }
                Some(AdamState::from_parts(step, moments))
            }
            other => {
                return Err(NumericsError::Checkpoint(format!("bad optimizer flag {other}")))
            }
        };
        if r.pos != bytes.len() {
            return Err(NumericsError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { meta, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

/// Precision bits recorded in a checkpoint header, without loading it.
pub fn peek_precision(bytes: &[u8]) -> Result<u8> {
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(NumericsError::Checkpoint("bad magic".into()));
    }
    Ok(bytes[8])
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NumericsError::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes_block(&mut self) -> Result<&'a [u8]> {
        let len = self.u32()? as usize;
        self.take(len)
    }
}
