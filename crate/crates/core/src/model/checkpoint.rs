//! Binary checkpoint container.
//!
//! All integers are little-endian `u32`:
//!
//! ```text
//! magic      8 bytes  "SUNETCKP"
//! version    u32      CHECKPOINT_VERSION
//! meta_len   u32      followed by meta_len bytes of UTF-8 `key = value` text
//!                     (model config echo plus training metadata)
//! n_params   u32
//! n_params × {
//!     name_len u32, name bytes (UTF-8)
//!     d0 u32, d1 u32, d2 u32
//!     d0·d1·d2 × f32 little-endian
//! }
//! ```

use std::fs;
use std::path::Path;

use super::{build_model, Model, Param, UNetConfig};
use crate::error::{Error, Result};
use crate::kv::KvDoc;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SUNETCKP";

/// A model together with free-form metadata (training step, losses, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: KvDoc,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut doc = self.model.config().to_kv();
        for key in self.meta.keys() {
            if doc.get(key).is_none() {
                doc.set(key, self.meta.get(key).unwrap_or_default());
            }
        }
        let meta = doc.render();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(meta.as_bytes());
        put_u32(&mut out, self.model.params().len() as u32);
        for p in self.model.params() {
            put_u32(&mut out, p.name.len() as u32);
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.shape.0 as u32);
            put_u32(&mut out, p.shape.1 as u32);
            put_u32(&mut out, p.shape.2 as u32);
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let meta = KvDoc::parse(meta)?;
        let config = UNetConfig::from_kv(&meta)?;

        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
            let count = shape.0 * shape.1 * shape.2;
            let raw = r.take(count * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.push(Param { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        let mut model = build_model(&config, 0)?;
        model.load_params(params)?;
        Ok(Self { model, meta })
    }
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &KvDoc) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let ckpt = Checkpoint {
        model: model.clone(),
        meta: meta.clone(),
    };
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
