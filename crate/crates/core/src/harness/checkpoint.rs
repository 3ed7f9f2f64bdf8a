//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GLEMCKPT" | version: u32 | record*
//! record = name_len: u32 | name | dtype: u8 | rank: u32 | dims: u64 * rank | payload
//! ```
//!
//! dtype 0 stores f64, 1 stores f32, 2 stores raw bytes. Byte records carry
//! the run configuration and the EM iteration tag.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"GLEMCKPT";
pub const VERSION: u32 = 1;

const CONFIG_KEY: &str = "__meta.config";
const ITER_KEY: &str = "__meta.em_iter";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    /// Echo of the run configuration (TOML).
    pub config: Option<String>,
    pub em_iter: Option<usize>,
    /// Storage precision for tensors. Loading always yields f64.
    pub dtype: Dtype,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_all<'a>(&mut self, named: impl IntoIterator<Item = (String, &'a Tensor)>) {
        for (k, t) in named {
            self.tensors.insert(k, t.clone().with_requires_grad(false));
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingEntry(name.into()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, t) in &self.tensors {
            let code = match self.dtype {
                Dtype::F64 => 0,
                Dtype::F32 => 1,
            };
            header(&mut out, name, code, t.shape());
            for &x in t.data() {
                match self.dtype {
                    Dtype::F64 => out.extend_from_slice(&x.to_le_bytes()),
                    Dtype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
                }
            }
        }
        let mut meta = |name: &str, bytes: &[u8]| {
            header(&mut out, name, 2, &[bytes.len()]);
            out.extend_from_slice(bytes);
        };
        if let Some(c) = &self.config {
            meta(CONFIG_KEY, c.as_bytes());
        }
        if let Some(it) = self.em_iter {
            meta(ITER_KEY, it.to_string().as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len(), "magic").ok() != Some(&MAGIC[..]) {
            return Err(Error::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let mut ck = Checkpoint::new();
        while !r.done() {
            let len = r.u32("name length")? as usize;
            let name = String::from_utf8(r.take(len, "name")?.to_vec())
                .map_err(|_| Error::Invalid("checkpoint entry name is not UTF-8".into()))?;
            let dtype = r.take(1, &name)?[0];
            let rank = r.u32(&name)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64(&name)? as usize);
            }
            let count: usize = shape.iter().product();
            match dtype {
                0 | 1 => {
                    let width = if dtype == 0 { 8 } else { 4 };
                    let raw = r.take(count.checked_mul(width).ok_or_else(|| Error::Truncated(name.clone()))?, &name)?;
                    let data: Vec<f64> = if dtype == 0 {
                        raw.chunks_exact(8)
                            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                            .collect()
                    } else {
                        ck.dtype = Dtype::F32;
                        raw.chunks_exact(4)
                            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                            .collect()
                    };
                    ck.tensors.insert(name, Tensor::new(shape, data)?);
                }
                2 => {
                    let raw = r.take(count, &name)?;
                    let text = String::from_utf8(raw.to_vec())
                        .map_err(|_| Error::Invalid(format!("checkpoint entry {name} is not UTF-8")))?;
                    match name.as_str() {
                        CONFIG_KEY => ck.config = Some(text),
                        ITER_KEY => {
                            ck.em_iter = Some(text.parse().map_err(|_| Error::Invalid(format!("bad em_iter `{text}`")))?)
                        }
                        _ => {}
                    }
                }
                other => return Err(Error::UnknownDtype(other)),
            }
        }
        Ok(ck)
    }

    /// Writes atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn header(out: &mut Vec<u8>, name: &str, dtype: u8, shape: &[usize]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dtype);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(what.to_string())),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}
