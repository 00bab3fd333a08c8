//! Binary checkpoint format: config, vocabulary, and named parameter
//! tensors, with the seed lineage recorded for reproducibility.

use std::io::{Read, Write};
use std::path::Path;

use super::{Model, ModelConfig, ModelError};
use crate::text::{Vocabulary, RESERVED};

const MAGIC: &[u8; 8] = b"LEDCKPT1";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

pub fn save_checkpoint(path: &Path, model: &Model, seed: u64) -> Result<(), ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.extend_from_slice(&seed.to_le_bytes());
    put_bytes(&mut out, &serde_json::to_vec(&model.config)?);

    let tokens: Vec<&str> =
        (RESERVED..model.vocab.len() as u32).map(|id| model.vocab.token(id)).collect();
    put_u32(&mut out, tokens.len() as u32);
    for tok in tokens {
        put_bytes(&mut out, tok.as_bytes());
    }

    put_u32(&mut out, model.params.len() as u32);
    for p in model.params.iter() {
        let p = p.borrow();
        put_bytes(&mut out, p.name.as_bytes());
        put_u32(&mut out, p.shape.len() as u32);
        for &d in &p.shape {
            put_u32(&mut out, d as u32);
        }
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.buf.len() {
            return Err(ModelError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], ModelError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String, ModelError> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| ModelError::Checkpoint("non-utf8 string".into()))
    }
}

/// Restore a model and its training seed.
pub fn load_checkpoint(path: &Path) -> Result<(Model, u64), ModelError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic; not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let config: ModelConfig = serde_json::from_slice(r.bytes()?)?;
    let n_tokens = r.u32()? as usize;
    let mut tokens = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        tokens.push(r.string()?);
    }
    let vocab = Vocabulary::build(tokens.iter().map(String::as_str));

    let model = Model::new(config, vocab, 0)?;
    let n_params = r.u32()? as usize;
    if n_params != model.params.len() {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint has {n_params} tensors, model expects {}",
            model.params.len()
        )));
    }
    for _ in 0..n_params {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let p = model
            .params
            .get(&name)
            .ok_or_else(|| ModelError::Checkpoint(format!("unknown tensor `{name}`")))?;
        let mut p = p.borrow_mut();
        if p.shape != shape {
            return Err(ModelError::Checkpoint(format!(
                "tensor `{name}` has shape {shape:?}, model expects {:?}",
                p.shape
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 8)?;
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            p.values[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != buf.len() {
        return Err(ModelError::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok((model, seed))
}
